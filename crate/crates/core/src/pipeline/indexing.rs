//! The hit-group record indexing rule:
//!
//! ```text
//! address = start + stride * (ray_contribution + multiplier * geometry_index + instance_contribution)
//! ```
//!
//! `start` and `stride` come from the dispatch, the ray contribution and
//! multiplier from the trace call, the geometry index from BLAS build order,
//! and the instance contribution from TLAS build.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("record stride must be positive")]
    ZeroStride,
    #[error("geometry multiplier must be positive")]
    ZeroMultiplier,
    #[error("record address overflows 64 bits")]
    Overflow,
}

/// Unit of `start`/`stride`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Granularity {
    /// Addresses count whole records; stride is 1.
    #[default]
    Records,
    /// Addresses count bytes; stride is the record size.
    Bytes,
}

/// Evaluates the indexing rule with overflow checking.
pub fn record_address(
    start: u64,
    stride: u64,
    ray_contribution: u64,
    multiplier: u64,
    geometry_index: u64,
    instance_contribution: u64,
) -> Result<u64, IndexError> {
    if stride == 0 {
        return Err(IndexError::ZeroStride);
    }
    if multiplier == 0 {
        return Err(IndexError::ZeroMultiplier);
    }
    multiplier
        .checked_mul(geometry_index)
        .and_then(|mg| mg.checked_add(ray_contribution))
        .and_then(|s| s.checked_add(instance_contribution))
        .and_then(|s| s.checked_mul(stride))
        .and_then(|s| s.checked_add(start))
        .ok_or(IndexError::Overflow)
}

/// Instance contribution that gives an instance its own run of records:
/// `ordinal * multiplier * geometries_per_blas`.
pub fn instance_contribution(ordinal: u64, multiplier: u64, geometries_per_blas: u64) -> u64 {
    ordinal * multiplier * geometries_per_blas
}
