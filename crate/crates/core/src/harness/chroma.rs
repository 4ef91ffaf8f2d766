//! Chroma quantizer offsets as a clipped linear function of qp.

use serde::{Deserialize, Serialize};

pub const CHROMA_OFFSET_MIN: i32 = -12;
pub const CHROMA_OFFSET_MAX: i32 = 0;

/// `offset(qp) = clip(round(c · (k_offset · qp + l_offset)), −12, 0)`,
/// applied identically to Cb and Cr.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChromaOffsetPolicy {
    /// 1 when capture and representation primaries match.
    pub c: f64,
    pub k_offset: f64,
    pub l_offset: f64,
}

impl Default for ChromaOffsetPolicy {
    fn default() -> Self {
        ChromaOffsetPolicy {
            c: 1.0,
            k_offset: -0.46,
            l_offset: 9.26,
        }
    }
}

impl ChromaOffsetPolicy {
    pub fn new(k_offset: f64, l_offset: f64) -> Self {
        ChromaOffsetPolicy {
            c: 1.0,
            k_offset,
            l_offset,
        }
    }

    /// Offset for `qp`; `f64::round` rounds half away from zero.
    pub fn offset(&self, qp: u8) -> i32 {
        let x = self.c * (self.k_offset * f64::from(qp) + self.l_offset);
        if x.is_nan() {
            return 0;
        }
        (x.round()
            .clamp(f64::from(CHROMA_OFFSET_MIN), f64::from(CHROMA_OFFSET_MAX))) as i32
    }

    /// `(cb, cr)` offsets for `qp`.
    pub fn offsets(&self, qp: u8) -> (i32, i32) {
        let o = self.offset(qp);
        (o, o)
    }
}

/// Chroma offset for `qp` under `policy`.
pub fn chroma_qp_offset(qp: u8, policy: &ChromaOffsetPolicy) -> i32 {
    policy.offset(qp)
}
