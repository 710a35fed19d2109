//! Result files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use sonoloc::sim::pcm_f32le;

use crate::config::ScenarioConfig;
use crate::scenario::{recordings, ScenarioResult};

pub const RESULT_FILE: &str = "result.json";
pub const CSV_FILE: &str = "distances.csv";
pub const PCM_DIR: &str = "pcm";

/// CSV rows `set_index,i,j,distance_m,masked` for every unordered pair of
/// every repetition. Unmeasured pairs have an empty distance and `masked`
/// set to 1.
pub fn distances_csv(result: &ScenarioResult) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["set_index", "i", "j", "distance_m", "masked"])?;
    for rep in &result.repetitions {
        let d = &rep.distances;
        for i in 0..d.n_phones {
            for j in i + 1..d.n_phones {
                let (dist, masked) = match d.get(i, j) {
                    Some(v) => (v.to_string(), "0"),
                    None => (String::new(), "1"),
                };
                w.write_record([&rep.index.to_string(), &i.to_string(), &j.to_string(), &dist, masked])?;
            }
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Writes `result.json` plus the optional CSV table and PCM dumps; returns
/// the written paths.
pub fn write_outputs(cfg: &ScenarioConfig, result: &ScenarioResult, dir: &Path, pcm: bool) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let path = dir.join(RESULT_FILE);
    fs::write(&path, result.to_json()).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    if cfg.output.csv {
        let path = dir.join(CSV_FILE);
        fs::write(&path, distances_csv(result)?).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    if pcm || cfg.output.pcm {
        let pcm_dir = dir.join(PCM_DIR);
        fs::create_dir_all(&pcm_dir)?;
        for k in 0..cfg.repetitions {
            for rec in recordings(cfg, k)? {
                let path = pcm_dir.join(format!("rep{k}_phone{}.f32", rec.phone_id));
                fs::write(&path, pcm_f32le(&rec)).with_context(|| format!("writing {}", path.display()))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
