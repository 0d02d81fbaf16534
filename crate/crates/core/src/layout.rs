use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

/// Partition of a state vector into named, contiguous 1-D fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldLayout {
    fields: Vec<(String, Range<usize>)>,
    dim: usize,
}

impl FieldLayout {
    /// Fields must be non-empty, contiguous and cover `0..dim` in order.
    pub fn new(fields: Vec<(String, Range<usize>)>) -> Result<Self> {
        let mut next = 0;
        for (name, range) in &fields {
            if range.start != next || range.end <= range.start {
                return Err(Error::InvalidArgument(alloc::format!(
                    "field `{name}` range {range:?} does not continue at {next}"
                )));
            }
            next = range.end;
        }
        if fields.is_empty() {
            return Err(Error::InvalidArgument("empty field layout".into()));
        }
        Ok(Self { fields, dim: next })
    }

    /// A single field spanning the whole state.
    pub fn single(name: &str, dim: usize) -> Self {
        Self {
            fields: alloc::vec![(name.into(), 0..dim)],
            dim,
        }
    }

    /// `count` equally sized fields.
    pub fn uniform(names: &[&str], field_len: usize) -> Self {
        let fields = names
            .iter()
            .enumerate()
            .map(|(i, n)| (String::from(*n), i * field_len..(i + 1) * field_len))
            .collect();
        Self {
            fields,
            dim: names.len() * field_len,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.fields[i].1.clone()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.fields[i].0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Range<usize>)> + '_ {
        self.fields.iter().map(|(n, r)| (n.as_str(), r.clone()))
    }
}
