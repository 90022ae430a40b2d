pub mod corpus;
pub mod labels;
pub mod smote;
pub mod split;
pub mod synth;

pub use labels::{
    assign_window_labels, epoch_label, label_epochs, ArtifactKind, LabelRecord, Stage, StageRecord, TruthInterval,
};
pub use smote::smote_oversample;
pub use split::{split_by_subject, Fractions, LabeledSet, Split};
pub use synth::{generate_corpus, generate_synthetic, SyntheticRecording, SyntheticSpec};
