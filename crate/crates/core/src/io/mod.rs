//! Attention tensor interchange: the ATTN v1 binary codec and the JSON
//! manifest that binds tensors to prompts, seeds and timesteps.

pub mod manifest;
pub mod tensor;

pub use manifest::{
    check_record, group_pools, load_manifest, load_manifest_by_timestep, validate_manifest,
    write_manifest, Diagnostic, DiagnosticKind, Manifest, ModelFamily, SeedManifest, SeedRecord,
    TensorKind, ValidationReport,
};
pub use tensor::{read_tensor, read_tensor_file, write_tensor, write_tensor_file, AttnTensor, DType};
