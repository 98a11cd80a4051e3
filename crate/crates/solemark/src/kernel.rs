//! The finite-support smoothing kernel.
//!
//! Both axes use a four-tier "cake" of nested widths 1, 3, 5, 7: tier `j`
//! contributes `exp(p_j)` of mass spread uniformly over its `2j-1` cells, so
//! the per-offset weights are automatically unimodal and sum to one. The 2-D
//! kernel is the product of the horizontal and vertical 1-D kernels.

use crate::error::{Error, Result};

/// How far (in cells) the kernel redistributes mass along each axis.
pub const KERNEL_REACH: i32 = 3;

/// Number of tiers per axis.
pub const TIERS: usize = 4;

/// Unconstrained tier parameters, one quadruple per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub p_h: [f64; TIERS],
    pub p_v: [f64; TIERS],
}

impl KernelParams {
    pub fn new(p_h: [f64; TIERS], p_v: [f64; TIERS]) -> Self {
        KernelParams { p_h, p_v }
    }

    pub fn zeros() -> Self {
        KernelParams {
            p_h: [0.0; TIERS],
            p_v: [0.0; TIERS],
        }
    }
}

/// Normalized per-tier offset weights for both axes.
///
/// `kappa_*[t]` is the probability of a single offset at distance `t` along
/// that axis, so `kappa[0] + 2*(kappa[1] + kappa[2] + kappa[3]) = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub kappa_h: [f64; TIERS],
    pub kappa_v: [f64; TIERS],
}

fn kappa_1d(p: &[f64; TIERS]) -> [f64; TIERS] {
    let total: f64 = p.iter().map(|v| v.exp()).sum();
    let mut kappa = [0.0; TIERS];
    let mut tail = 0.0;
    for i in (0..TIERS).rev() {
        tail += p[i].exp() / (2 * i + 1) as f64;
        kappa[i] = tail / total;
    }
    kappa
}

impl Kernel {
    pub fn from_params(p: &KernelParams) -> Kernel {
        Kernel {
            kappa_h: kappa_1d(&p.p_h),
            kappa_v: kappa_1d(&p.p_v),
        }
    }

    /// The no-smoothing kernel: all mass on offset (0,0).
    pub fn identity() -> Kernel {
        Kernel {
            kappa_h: [1.0, 0.0, 0.0, 0.0],
            kappa_v: [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Weight of offset `(di, dj)`; errors outside the supported window.
    pub fn weight(&self, di: i32, dj: i32) -> Result<f64> {
        if di.abs() > KERNEL_REACH || dj.abs() > KERNEL_REACH {
            return Err(Error::KernelOffset { di, dj });
        }
        Ok(self.weight_at(di, dj))
    }

    /// Unchecked weight lookup; offsets must lie in the window.
    #[inline]
    pub fn weight_at(&self, di: i32, dj: i32) -> f64 {
        debug_assert!(di.abs() <= KERNEL_REACH && dj.abs() <= KERNEL_REACH);
        self.kappa_h[di.unsigned_abs() as usize] * self.kappa_v[dj.unsigned_abs() as usize]
    }
}
