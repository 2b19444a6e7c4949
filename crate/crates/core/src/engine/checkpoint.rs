use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChainConfig, EngineError, SampleChain};
use crate::model::{NetworkSpec, ObservationSequence, Params, Path};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Digest of a dataset, used to tie a checkpoint to its data.
pub fn data_digest(data: &[ObservationSequence]) -> String {
    let mut h = Sha256::new();
    for seq in data {
        h.update(serde_json::to_vec(seq).expect("observations serialize"));
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Complete sampler state after `next_iteration` iterations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub spec_digest: String,
    pub data_digest: String,
    pub config: ChainConfig,
    pub next_iteration: usize,
    pub paths: Vec<Path>,
    pub params: Params,
    pub chain: SampleChain,
}

impl Checkpoint {
    pub(super) fn new(
        spec: &NetworkSpec,
        data_digest: &str,
        config: &ChainConfig,
        next_iteration: usize,
        paths: &[Path],
        params: &Params,
        chain: &SampleChain,
    ) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            spec_digest: spec.digest(),
            data_digest: data_digest.to_string(),
            config: config.clone(),
            next_iteration,
            paths: paths.to_vec(),
            params: params.clone(),
            chain: chain.clone(),
        }
    }

    /// Writes atomically: to a sibling temp file, then renamed over `file`.
    pub fn save(&self, file: &FsPath) -> Result<(), EngineError> {
        let err = |msg: String| EngineError::Checkpoint {
            path: file.to_path_buf(),
            msg,
        };
        let mut tmp = file.as_os_str().to_owned();
        tmp.push(".tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            bincode::serialize_into(&mut w, self).map_err(|e| err(e.to_string()))?;
            w.flush()?;
        }
        fs::rename(&tmp, file)?;
        Ok(())
    }

    /// Reads `file` and checks that it belongs to this spec, data and chain.
    /// The iteration count may differ, which extends or shortens the run.
    pub fn load(file: &FsPath, spec: &NetworkSpec, data_digest: &str, config: &ChainConfig) -> Result<Self, EngineError> {
        let err = |msg: String| EngineError::Checkpoint {
            path: file.to_path_buf(),
            msg,
        };
        let ck: Checkpoint =
            bincode::deserialize_from(BufReader::new(File::open(file)?)).map_err(|e| err(format!("unreadable: {e}")))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(err(format!("version {} is not supported", ck.version)));
        }
        if ck.spec_digest != spec.digest() {
            return Err(err("network spec differs from the one the chain was started with".into()));
        }
        if ck.data_digest != data_digest {
            return Err(err("dataset differs from the one the chain was started with".into()));
        }
        if !ck.config.same_chain(config) {
            return Err(err("chain configuration differs (only iterations, workers and checkpoint interval may change)".into()));
        }
        if ck.next_iteration > config.iterations {
            return Err(err(format!(
                "checkpoint is at iteration {}, beyond the requested {}",
                ck.next_iteration, config.iterations
            )));
        }
        if ck.paths.len() == 0 {
            return Err(err("no paths stored".into()));
        }
        Ok(ck)
    }
}
