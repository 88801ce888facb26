//! Session ingestion, resampling, action recognition and dataset assembly.

mod example_io;
mod examples;
mod recognize;
mod resample;
mod schema;
mod session;

pub use example_io::{read_examples, write_examples, ExampleSet, ExampleSetHeader};
pub use examples::{
    balance_classes, balance_target, build_examples, label_for_time, split_dataset, DatasetSplit, Example, TaskKind,
    TaskSpec, WindowLabel, WindowingParams, NEGATIVE_CLASS_NAME, TIME_EPS,
};
pub use recognize::{recognize_actions, rising_edges, ActionClass, ActionEvent, EventSource, RecognitionRules};
pub use resample::{frame_time, resample, FrameSeries, FRAME_RATE_HZ};
pub use schema::{Channel, ChannelKind, FeatureSchema, Modality, STANDARD_SCHEMA_ID};
pub use session::{read_session, write_session, ChannelLog, Sample, SensorLog};
