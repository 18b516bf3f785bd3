use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which part of the network a segment belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentRole {
    /// Shared by every task.
    Encoder,
    /// Used only by the given task.
    Head(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub role: SegmentRole,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }

    /// True when gradients of `task` may touch this segment.
    pub fn is_active_for(&self, task: usize) -> bool {
        match self.role {
            SegmentRole::Encoder => true,
            SegmentRole::Head(owner) => owner == task,
        }
    }
}

/// Ordered, disjoint segments covering a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    segments: Vec<Segment>,
}

impl Layout {
    /// Encoder of `encoder_len` values followed by one head of `head_len` per task.
    pub fn shared_encoder(encoder_len: usize, head_len: usize, n_tasks: usize) -> Self {
        let mut segments = Vec::with_capacity(n_tasks + 1);
        segments.push(Segment {
            role: SegmentRole::Encoder,
            offset: 0,
            len: encoder_len,
        });
        for k in 0..n_tasks {
            segments.push(Segment {
                role: SegmentRole::Head(k),
                offset: encoder_len + k * head_len,
                len: head_len,
            });
        }
        Self { segments }
    }

    /// Builds a layout from arbitrary segments, checking they tile `0..total`.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        let mut cursor = 0;
        for s in &segments {
            if s.offset != cursor {
                return Err(Error::Dimension(format!(
                    "segment {:?} starts at {} but the previous one ended at {cursor}",
                    s.role, s.offset
                )));
            }
            cursor += s.len;
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len)
    }

    pub fn n_tasks(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s.role, SegmentRole::Head(_)))
            .count()
    }

    pub fn encoder(&self) -> Option<&Segment> {
        self.segments.iter().find(|s| s.role == SegmentRole::Encoder)
    }

    pub fn head(&self, task: usize) -> Option<&Segment> {
        self.segments.iter().find(|s| s.role == SegmentRole::Head(task))
    }
}

/// Flat parameter array with an immutable segment layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Layout,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            values: vec![0.0; layout.total_len()],
            layout,
        }
    }

    pub fn from_values(values: Vec<f64>, layout: Layout) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::LengthMismatch {
                what: "parameter values",
                expected: layout.total_len(),
                actual: values.len(),
            });
        }
        Ok(Self { values, layout })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segment(&self, seg: &Segment) -> &[f64] {
        &self.values[seg.range()]
    }

    pub fn segment_mut(&mut self, seg: &Segment) -> &mut [f64] {
        &mut self.values[seg.range()]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_encoder_layout_tiles_vector() {
        let layout = Layout::shared_encoder(10, 3, 2);
        assert_eq!(layout.total_len(), 16);
        assert_eq!(layout.n_tasks(), 2);
        assert_eq!(layout.head(1).unwrap().range(), 13..16);
        assert!(Layout::from_segments(layout.segments().to_vec()).is_ok());
        let mut gap = layout.segments().to_vec();
        gap[1].offset += 1;
        assert!(Layout::from_segments(gap).is_err());
    }

    #[test]
    fn activity() {
        let layout = Layout::shared_encoder(4, 2, 3);
        let active: Vec<bool> = layout.segments().iter().map(|s| s.is_active_for(1)).collect();
        assert_eq!(active, [true, false, true, false]);
    }
}
