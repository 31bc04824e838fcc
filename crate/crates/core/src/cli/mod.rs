//! Config parsing and reproducible run directories for the `nfldp` binary.

mod config;
mod manifest;
mod run;

pub use config::{
    parse_config, parse_config_as, parse_config_for, ActionParams, BoundaryParams, Command, ConvergenceParams,
    ExitTimesParams, ExperimentConfig, Format, KramersParams, NoiseSection, QuasipotentialParams, SimulateParams,
    StateSpec, StationaryParams,
};
pub use manifest::{sha256_hex, verify_manifest, write_atomic, OutputChecksum, RunDir, RunManifest, MANIFEST_NAME};
pub use run::{config_hash, exit_code, run, RunOutcome};
