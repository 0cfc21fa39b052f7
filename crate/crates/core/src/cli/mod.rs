//! File-based experiment commands behind the `diffedit` binary.
//!
//! Every command reads the experiment config plus files in the output
//! directory and writes its artifacts there:
//!
//! | verb         | writes                                                     |
//! |--------------|------------------------------------------------------------|
//! | `gen-world`  | `world.{meta.json,basis.ldir,centers.ldir,observe.ldir}`   |
//! | `gen-pairs`  | `dataset.ldir` + `dataset.meta.json`, `raw.ldir`, `sources.ldir` |
//! | `train`      | `checkpoint.lckp`, `loss.csv`                              |
//! | `sample`     | `samples.ldir`                                             |
//! | `edit`       | `edited.ldir`, `edit_report.json`                          |
//! | `eval`       | `report.json`, `hist_dataset.csv`, `hist_generated.csv`    |
//! | `grad-check` | `grad_check.json`                                          |

mod commands;
mod config;

pub use commands::{
    cmd_edit, cmd_eval, cmd_gen_pairs, cmd_gen_world, cmd_grad_check, cmd_sample, cmd_train, read_latents, run,
    write_latents, CommandOutput, Verb, CHECKPOINT_FILE, DATASET_FILE, EDITED_FILE, EDIT_REPORT_FILE, GRAD_CHECK_FILE,
    LOSS_FILE, RAW_FILE, REPORT_FILE, SAMPLES_FILE, SOURCES_FILE, WORLD_STEM,
};
pub use config::{
    DatasetConfig, EditConfig, EvalConfig, ExperimentConfig, GeneratedSource, GradCheckConfig, SampleConfig,
    StageConfig, TrainSection, WorldConfig,
};
