use super::{KeyValue, MapReduce, TaskError};

/// Counts whitespace-separated words. Input records are `(doc id, text)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordCount;

impl MapReduce for WordCount {
    type Input = KeyValue<usize, String>;
    type Key = String;
    type Value = u64;
    type Output = KeyValue<String, u64>;
    type Context = ();

    fn map(&self, _: &(), record: &Self::Input, emit: &mut Vec<(String, u64)>) -> Result<(), TaskError> {
        emit.extend(record.value.split_whitespace().map(|w| (w.to_string(), 1)));
        Ok(())
    }

    fn has_combiner(&self) -> bool {
        true
    }

    fn combine(&self, _: &String, values: Vec<u64>) -> Vec<u64> {
        vec![values.iter().sum()]
    }

    fn reduce(&self, _: &(), key: &String, values: Vec<u64>, emit: &mut Vec<Self::Output>) -> Result<(), TaskError> {
        emit.push(KeyValue::new(key.clone(), values.iter().sum()));
        Ok(())
    }
}
