//! One-knob sweeps: vary exactly one architecture or data axis, run the
//! full experiment per value, then correlate parameter count with
//! generalization accuracy (Spearman) and fit the normalized regression
//! slope per axis.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use syntrans_core::data::{
    build_transform_splits, subsample_nested, synth_corpus, CorpusSpec, Register, SplitSet,
    SplitSizes, Task,
};
use syntrans_core::grammar::Grammar;
use syntrans_core::stats::{minmax_normalize, regression_slope, spearman};
use syntrans_core::tokenizer::{Tokenizer, TokenizerConfig};
use syntrans_model::config::ArchConfig;
use syntrans_model::train::TrainConfig;

use crate::experiment::{run_experiment, ExperimentConfig, PretrainJob};
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Nl,
    El,
    Dl,
    Dm,
    Ff,
    Nh,
    Kv,
    CorpusSize,
    Register,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "nl" => SweepAxis::Nl,
            "el" => SweepAxis::El,
            "dl" => SweepAxis::Dl,
            "dm" => SweepAxis::Dm,
            "ff" => SweepAxis::Ff,
            "nh" => SweepAxis::Nh,
            "kv" => SweepAxis::Kv,
            "corpus_size" => SweepAxis::CorpusSize,
            "register" => SweepAxis::Register,
            other => return Err(format!("unknown sweep axis '{other}'")),
        })
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Nl => "nl",
            SweepAxis::El => "el",
            SweepAxis::Dl => "dl",
            SweepAxis::Dm => "dm",
            SweepAxis::Ff => "ff",
            SweepAxis::Nh => "nh",
            SweepAxis::Kv => "kv",
            SweepAxis::CorpusSize => "corpus_size",
            SweepAxis::Register => "register",
        })
    }
}

impl SweepAxis {
    pub fn is_data_axis(&self) -> bool {
        matches!(self, SweepAxis::CorpusSize | SweepAxis::Register)
    }
}

/// Pre-training recipe shared by the sweep points (mandatory for the data
/// axes, optional for architecture axes).
#[derive(Debug, Clone)]
pub struct SweepPretrain {
    pub register: Register,
    pub size_words: usize,
    pub corpus_seed: u64,
    pub config: TrainConfig,
    /// Subword vocabulary budget; the tokenizer is trained per corpus.
    pub subword_vocab: usize,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<String>,
    pub base_arch: ArchConfig,
    pub tasks: Vec<Task>,
    pub seeds: Vec<u64>,
    pub finetune: TrainConfig,
    pub pretrain: Option<SweepPretrain>,
    pub data_sizes: SplitSizes,
    pub data_seed: u64,
    pub eval_limit: Option<usize>,
    pub out_dir: PathBuf,
}

fn apply_axis(base: &ArchConfig, axis: SweepAxis, value: &str) -> Result<ArchConfig, HarnessError> {
    let mut arch = base.clone();
    let parse = |v: &str| -> Result<usize, HarnessError> {
        v.parse()
            .map_err(|_| HarnessError::Invalid(format!("bad {axis} value '{v}'")))
    };
    match axis {
        SweepAxis::Nl => arch = arch.with_nl(parse(value)?),
        SweepAxis::El => arch.encoder_layers = parse(value)?,
        SweepAxis::Dl => arch.decoder_layers = parse(value)?,
        SweepAxis::Dm => arch.d_model = parse(value)?,
        SweepAxis::Ff => arch.d_ff = parse(value)?,
        SweepAxis::Nh => arch.n_heads = parse(value)?,
        SweepAxis::Kv => arch.d_kv = parse(value)?,
        SweepAxis::CorpusSize | SweepAxis::Register => {}
    }
    Ok(arch)
}

#[derive(Debug)]
pub struct SweepPointResult {
    pub value: String,
    pub task: Task,
    pub x: f64,
    pub params: u64,
    pub pretrain_words: usize,
    pub gen_targeted_mean: f64,
    pub gen_targeted_std: f64,
    pub gen_seq_mean: f64,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub points: Vec<SweepPointResult>,
    pub sweep_csv: PathBuf,
    pub analysis_txt: PathBuf,
}

/// Per-point corpora for the data axes; `None` entries mean no pre-training
/// for that point (architecture axes without a pretrain recipe).
fn point_corpora(
    spec: &SweepSpec,
    grammar: &Grammar,
) -> Result<Vec<Option<(String, Vec<String>)>>, HarnessError> {
    match (spec.axis, &spec.pretrain) {
        (SweepAxis::CorpusSize, Some(p)) => {
            let sizes: Result<Vec<usize>, _> = spec.values.iter().map(|v| v.parse::<usize>()).collect();
            let sizes = sizes.map_err(|_| HarnessError::Invalid("bad corpus_size values".into()))?;
            let max = *sizes
                .iter()
                .max()
                .ok_or_else(|| HarnessError::Invalid("no sweep values".into()))?;
            let master = synth_corpus(
                &CorpusSpec {
                    register: p.register,
                    size_words: max,
                    seed: p.corpus_seed,
                    source_path: None,
                },
                grammar,
            )?;
            let families = subsample_nested(&master, &sizes, p.corpus_seed)?;
            Ok(families
                .into_iter()
                .zip(&sizes)
                .map(|(lines, size)| Some((format!("{}-{size}", p.register), lines)))
                .collect())
        }
        (SweepAxis::Register, Some(p)) => spec
            .values
            .iter()
            .map(|v| {
                let register: Register = v
                    .parse()
                    .map_err(|e: String| HarnessError::Invalid(e))?;
                let lines = synth_corpus(
                    &CorpusSpec {
                        register,
                        size_words: p.size_words,
                        seed: p.corpus_seed,
                        source_path: None,
                    },
                    grammar,
                )?;
                Ok(Some((format!("{register}-{}", p.size_words), lines)))
            })
            .collect(),
        (_, Some(p)) => {
            let lines = synth_corpus(
                &CorpusSpec {
                    register: p.register,
                    size_words: p.size_words,
                    seed: p.corpus_seed,
                    source_path: None,
                },
                grammar,
            )?;
            let label = format!("{}-{}", p.register, p.size_words);
            Ok(vec![Some((label, lines)); spec.values.len()])
        }
        (axis, None) if axis.is_data_axis() => Err(HarnessError::Invalid(format!(
            "axis {axis} needs a pretraining recipe"
        ))),
        (_, None) => Ok(vec![None; spec.values.len()]),
    }
}

pub fn run_sweep(spec: &SweepSpec, grammar: &Grammar) -> Result<SweepOutcome, HarnessError> {
    if spec.values.is_empty() || spec.tasks.is_empty() || spec.seeds.is_empty() {
        return Err(HarnessError::Invalid("sweep needs values, tasks, and seeds".into()));
    }
    fs::create_dir_all(&spec.out_dir)?;
    let corpora = point_corpora(spec, grammar)?;

    // One dataset per task, shared by every sweep point.
    let mut datasets: Vec<(Task, SplitSet)> = Vec::new();
    for &task in &spec.tasks {
        datasets.push((task, build_transform_splits(task, grammar, spec.data_sizes, spec.data_seed)?));
    }

    let mut points = Vec::new();
    let mut csv = String::from(
        "axis,value,task,params,pretrain_corpus,pretrain_words,seed,split,seq_acc,seq_std,targeted_acc,targeted_std\n",
    );

    for (value, corpus) in spec.values.iter().zip(&corpora) {
        let arch = match apply_axis(&spec.base_arch, spec.axis, value) {
            Ok(a) => a,
            Err(e) => {
                for &task in &spec.tasks {
                    points.push(SweepPointResult {
                        value: value.clone(),
                        task,
                        x: f64::NAN,
                        params: 0,
                        pretrain_words: 0,
                        gen_targeted_mean: f64::NAN,
                        gen_targeted_std: f64::NAN,
                        gen_seq_mean: f64::NAN,
                        error: Some(e.to_string()),
                    });
                }
                continue;
            }
        };
        for (task, data) in &datasets {
            let point_dir = spec.out_dir.join(format!("{}_{value}_{task}", spec.axis));
            let attempt = (|| -> Result<_, HarnessError> {
                let (tokenizer, pretrain_job) = match corpus {
                    Some((label, lines)) => {
                        let p = spec.pretrain.as_ref().expect("corpus implies recipe");
                        let tok = Tokenizer::train_subword(
                            lines,
                            &TokenizerConfig::subword(p.subword_vocab),
                        )?;
                        let job = PretrainJob {
                            label: label.clone(),
                            corpus: lines.clone(),
                            config: p.config.clone(),
                        };
                        (tok, Some(job))
                    }
                    None => (Tokenizer::word_level(grammar), None),
                };
                let mut arch = arch.clone().with_vocab(tokenizer.vocab_size());
                arch.max_len = arch.max_len.max(spec.finetune.max_len);
                let cfg = ExperimentConfig {
                    run_id: format!("{}-{value}-{task}", spec.axis),
                    arch,
                    task: *task,
                    seeds: spec.seeds.clone(),
                    finetune: spec.finetune.clone(),
                    pretrain: pretrain_job,
                    eval_limit: spec.eval_limit,
                    out_dir: point_dir,
                };
                run_experiment(&cfg, data, &tokenizer, grammar)
            })();
            match attempt {
                Ok(out) => {
                    let x = match spec.axis {
                        SweepAxis::CorpusSize => out.pretrain_words as f64,
                        SweepAxis::Register => (points.len() + 1) as f64,
                        _ => out.params as f64,
                    };
                    for o in &out.seed_outcomes {
                        for result in [&o.test, &o.gen].into_iter().flatten() {
                            let _ = writeln!(
                                csv,
                                "{},{},{},{},{},{},{},{},{:.6},,{:.6},",
                                spec.axis,
                                value,
                                task,
                                out.params,
                                out.pretrain_label,
                                out.pretrain_words,
                                o.seed,
                                result.split,
                                result.sequence_mean,
                                result.targeted_mean
                            );
                        }
                    }
                    for s in &out.summaries {
                        let _ = writeln!(
                            csv,
                            "{},{},{},{},{},{},mean,{},{:.6},{:.6},{:.6},{:.6}",
                            spec.axis,
                            value,
                            task,
                            out.params,
                            out.pretrain_label,
                            out.pretrain_words,
                            s.split,
                            s.seq_mean,
                            s.seq_std,
                            s.targeted_mean,
                            s.targeted_std
                        );
                    }
                    let gen = out.summary_for(syntrans_core::data::Split::Gen);
                    points.push(SweepPointResult {
                        value: value.clone(),
                        task: *task,
                        x,
                        params: out.params,
                        pretrain_words: out.pretrain_words,
                        gen_targeted_mean: gen.map_or(f64::NAN, |s| s.targeted_mean),
                        gen_targeted_std: gen.map_or(f64::NAN, |s| s.targeted_std),
                        gen_seq_mean: gen.map_or(f64::NAN, |s| s.seq_mean),
                        error: None,
                    });
                }
                Err(e) => {
                    points.push(SweepPointResult {
                        value: value.clone(),
                        task: *task,
                        x: f64::NAN,
                        params: arch.count_params(),
                        pretrain_words: 0,
                        gen_targeted_mean: f64::NAN,
                        gen_targeted_std: f64::NAN,
                        gen_seq_mean: f64::NAN,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }

    let sweep_csv = spec.out_dir.join("sweep.csv");
    fs::write(&sweep_csv, csv)?;
    let analysis_txt = spec.out_dir.join("analysis.txt");
    fs::write(&analysis_txt, render_analysis(spec, &points))?;
    Ok(SweepOutcome {
        points,
        sweep_csv,
        analysis_txt,
    })
}

/// Params-vs-accuracy Spearman and the regression slope with parameter
/// counts min-max normalized onto the accuracy range.
fn render_analysis(spec: &SweepSpec, points: &[SweepPointResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "axis: {}", spec.axis);
    let _ = writeln!(out, "values: {}", spec.values.join(","));
    for &task in &spec.tasks {
        let ok: Vec<&SweepPointResult> = points
            .iter()
            .filter(|p| p.task == task && p.error.is_none() && p.gen_targeted_mean.is_finite())
            .collect();
        let _ = writeln!(out, "\ntask: {task} (gen split, targeted accuracy)");
        for p in points.iter().filter(|p| p.task == task) {
            match &p.error {
                None => {
                    let _ = writeln!(
                        out,
                        "  {}={} params={} words={} acc={:.4} (std {:.4})",
                        spec.axis, p.value, p.params, p.pretrain_words, p.gen_targeted_mean, p.gen_targeted_std
                    );
                }
                Some(e) => {
                    let _ = writeln!(out, "  {}={} FAILED: {e}", spec.axis, p.value);
                }
            }
        }
        let xs: Vec<f64> = ok.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = ok.iter().map(|p| p.gen_targeted_mean).collect();
        if xs.len() >= 3 {
            match spearman(&xs, &ys) {
                Ok((rho, pval)) => {
                    let _ = writeln!(out, "  spearman_rho={rho:.4} p={pval:.4}");
                }
                Err(e) => {
                    let _ = writeln!(out, "  spearman: {e}");
                }
            }
        } else {
            let _ = writeln!(out, "  spearman: needs at least 3 points");
        }
        if xs.len() >= 2 {
            let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            match minmax_normalize(&xs, lo, hi).and_then(|nx| regression_slope(&nx, &ys)) {
                Ok(slope) => {
                    let _ = writeln!(out, "  slope_normalized={slope:.4}");
                }
                Err(e) => {
                    let _ = writeln!(out, "  slope: {e}");
                }
            }
        } else {
            let _ = writeln!(out, "  slope: needs at least 2 points");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_application_touches_exactly_one_knob() {
        let base = ArchConfig::desk(100);
        let a = apply_axis(&base, SweepAxis::Dm, "128").unwrap();
        assert_eq!(a.d_model, 128);
        assert_eq!(a.d_ff, base.d_ff);
        let b = apply_axis(&base, SweepAxis::Nl, "4").unwrap();
        assert_eq!(b.encoder_layers, 4);
        assert_eq!(b.decoder_layers, 4);
        let c = apply_axis(&base, SweepAxis::El, "3").unwrap();
        assert_eq!(c.encoder_layers, 3);
        assert_eq!(c.decoder_layers, base.decoder_layers);
        assert!(apply_axis(&base, SweepAxis::Kv, "abc").is_err());
    }

    #[test]
    fn tiny_architecture_sweep_produces_points_and_analysis() {
        let g = Grammar::default_grammar();
        let dir = tempfile::tempdir().unwrap();
        let spec = SweepSpec {
            axis: SweepAxis::Nl,
            values: vec!["1".into(), "2".into()],
            base_arch: ArchConfig::new(1, 16, 32, 2, 8, 0).with_max_len(48),
            tasks: vec![Task::Quest],
            seeds: vec![1],
            finetune: TrainConfig {
                steps: Some(2),
                epochs: None,
                checkpoint_every: 2,
                batch: 8,
                max_len: 48,
                ..TrainConfig::desk_finetune()
            },
            pretrain: None,
            data_sizes: SplitSizes {
                n_train: 24,
                n_test: 6,
                n_gen: 6,
            },
            data_seed: 5,
            eval_limit: Some(4),
            out_dir: dir.path().to_path_buf(),
        };
        let out = run_sweep(&spec, &g).unwrap();
        assert_eq!(out.points.len(), 2);
        assert!(out.points.iter().all(|p| p.error.is_none()));
        let csv = fs::read_to_string(&out.sweep_csv).unwrap();
        // 2 values x 1 task x (1 seed x 2 splits + 2 summary rows) + header.
        assert_eq!(csv.lines().count(), 1 + 2 * (2 + 2));
        let analysis = fs::read_to_string(&out.analysis_txt).unwrap();
        assert!(analysis.contains("axis: nl"));
        assert!(analysis.contains("slope"));
    }
}
