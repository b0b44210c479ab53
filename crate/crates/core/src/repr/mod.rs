//! Representation handling: text cleaning and character-level featurizers.

mod clean;
mod features;

pub use clean::{
    apply_rule, clean_hex, strip_comments, CleanOutcome, CleaningRule, CommentStyle,
};
pub use features::{FeatureError, FeatureVector, FeaturizerKind, FittedFeaturizer, MAX_FEATURES};
