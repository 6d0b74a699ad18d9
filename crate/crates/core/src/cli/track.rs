//! Frame-differencing motion tracker with an exponentially smoothed box.

use crate::error::{Error, Result};
use crate::imgio::GrayImage;

/// Inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl BoundingBox {
    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.top + self.bottom) as f64,
            0.5 * (self.left + self.right) as f64,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    previous: Option<GrayImage>,
    bbox: Option<BoundingBox>,
    alpha: f64,
}

impl TrackState {
    /// `alpha` weights the newest box; it must lie in `(0, 1]`.
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(TrackState {
            previous: None,
            bbox: None,
            alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn bbox(&self) -> Option<BoundingBox> {
        self.bbox
    }
}

/// Advances the tracker by one frame.
///
/// Pixels whose absolute change from the previous frame exceeds `threshold`
/// are bounded by a box, which is blended with the previous box as
/// `alpha · new + (1 − alpha) · old` and rounded half away from zero. No box
/// is reported for the first frame or when nothing changed.
pub fn track_step(
    state: TrackState,
    frame: &GrayImage,
    threshold: f64,
) -> Result<(TrackState, Option<BoundingBox>)> {
    let TrackState {
        previous,
        bbox: last_box,
        alpha,
    } = state;
    let Some(prev) = previous else {
        let next = TrackState {
            previous: Some(frame.clone()),
            bbox: None,
            alpha,
        };
        return Ok((next, None));
    };
    if prev.dims() != frame.dims() {
        return Err(Error::Dimension {
            expected: prev.width() * prev.height(),
            found: frame.width() * frame.height(),
        });
    }

    let width = frame.width();
    let mut found: Option<BoundingBox> = None;
    for (i, (a, b)) in prev.pixels().iter().zip(frame.pixels()).enumerate() {
        if (a - b).abs() > threshold {
            let (r, c) = (i / width, i % width);
            found = Some(match found {
                None => BoundingBox {
                    top: r,
                    left: c,
                    bottom: r,
                    right: c,
                },
                Some(bb) => BoundingBox {
                    top: bb.top.min(r),
                    left: bb.left.min(c),
                    bottom: bb.bottom.max(r),
                    right: bb.right.max(c),
                },
            });
        }
    }

    let smoothed = found.map(|raw| match last_box {
        None => raw,
        Some(old) => {
            let blend = |new: usize, old: usize| {
                (alpha * new as f64 + (1.0 - alpha) * old as f64).round() as usize
            };
            BoundingBox {
                top: blend(raw.top, old.top),
                left: blend(raw.left, old.left),
                bottom: blend(raw.bottom, old.bottom),
                right: blend(raw.right, old.right),
            }
        }
    });
    let next = TrackState {
        previous: Some(frame.clone()),
        bbox: smoothed,
        alpha,
    };
    Ok((next, smoothed))
}
