//! Ray-tracing pipeline: shader table, record indexing, shader registry,
//! trace execution and dispatch.

mod exec;
mod indexing;
mod registry;
mod table;

pub use exec::{
    DispatchError, DispatchOutput, DispatchStats, GlobalResources, OverflowPolicy, Pipeline, PipelineConfig,
    PipelineError, RayFlags, TraceError, Tracer,
};
pub use indexing::{instance_contribution, record_address, Granularity, IndexError};
pub use registry::{
    AnyHitShader, ClosestHitShader, HitInfo, IntersectionShader, MissShader, RayGenInput, RayGenShader, RayInfo,
    ShaderRegistry, ShaderStage,
};
pub use table::{
    derive_export_associations, record_stride, HitGroupRecord, MissRecord, RecordKey, ShaderTable,
    ShaderTableBuilder, ShaderTableEntry, TableError, TableLayout, RECORD_HEADER_SIZE,
};
