use std::fmt::Write as _;
use std::time::Instant;

use crate::faucodes::Emotion;
use crate::synthgen::LabeledSample;

use super::{
    classify_full, classify_pruned, extract_features, FullDecision, PipelineError, TrainedBundle,
};

/// Point counts of one emotion's plan against the full face.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub emotion: Emotion,
    pub full_points: usize,
    pub pruned_points: usize,
    pub reduction: f64,
}

/// Per "not e" detector: correctness on the benchmark samples and the
/// trained model's support-vector count and margin, for both detector sets.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorRow {
    pub label: &'static str,
    pub full_correctness: f64,
    pub full_sv: usize,
    pub full_margin: f64,
    pub pruned_correctness: f64,
    pub pruned_sv: usize,
    pub pruned_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub samples: usize,
    pub rows: Vec<BenchRow>,
    pub mean_reduction: f64,
    /// Seconds per sample, best of several passes.
    pub full_time: f64,
    pub pruned_time: f64,
    pub full_accuracy: f64,
    pub pruned_accuracy: f64,
    pub agreement: f64,
    pub fallback_rate: f64,
    pub mean_points_examined: f64,
    pub detectors: Vec<DetectorRow>,
}

const MIN_PASSES: usize = 5;
const MIN_SECONDS: f64 = 0.2;
const MAX_PASSES: usize = 5000;

/// Seconds for one single-threaded pass of `f` over `samples`.
fn pass<F>(samples: &[LabeledSample], f: &mut F) -> Result<f64, PipelineError>
where
    F: FnMut(&LabeledSample) -> Result<(), PipelineError>,
{
    let start = Instant::now();
    for s in samples {
        f(s)?;
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Best per-sample times of two functions over alternating passes, so both
/// see the same machine state.
fn time_pair<F, G>(
    samples: &[LabeledSample],
    mut f: F,
    mut g: G,
) -> Result<(f64, f64), PipelineError>
where
    F: FnMut(&LabeledSample) -> Result<(), PipelineError>,
    G: FnMut(&LabeledSample) -> Result<(), PipelineError>,
{
    let (mut best_f, mut best_g) = (f64::INFINITY, f64::INFINITY);
    let mut spent = 0.0;
    let mut passes = 0;
    while passes < MIN_PASSES || (spent < MIN_SECONDS && passes < MAX_PASSES) {
        let tf = pass(samples, &mut f)?;
        let tg = pass(samples, &mut g)?;
        best_f = best_f.min(tf);
        best_g = best_g.min(tg);
        spent += tf + tg;
        passes += 1;
    }
    let n = samples.len() as f64;
    Ok((best_f / n, best_g / n))
}

/// Runs both paths over `samples` and reports the point reductions, timing,
/// accuracy, agreement and detector statistics.
pub fn bench_compare(
    bundle: &TrainedBundle,
    samples: &[LabeledSample],
) -> Result<BenchReport, PipelineError> {
    if samples.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    bundle.check()?;
    let n = samples.len() as f64;

    let rows: Vec<BenchRow> = bundle
        .pruned
        .iter()
        .map(|p| BenchRow {
            emotion: p.emotion,
            full_points: 24,
            pruned_points: p.points.len(),
            reduction: 1.0 - p.points.len() as f64 / 24.0,
        })
        .collect();
    let mean_reduction = rows.iter().map(|r| r.reduction).sum::<f64>() / rows.len() as f64;

    let mut full_ok = 0usize;
    let mut pruned_ok = 0usize;
    let mut agree = 0usize;
    let mut fallbacks = 0usize;
    let mut points = 0usize;
    let mut full_hits = [0usize; 6];
    let mut pruned_hits = [0usize; 6];
    let block = bundle.config.block_len();
    let everything = super::all_points();
    for s in samples {
        let full: FullDecision = classify_full(bundle, s)?;
        let pruned = classify_pruned(bundle, s, None)?;
        full_ok += usize::from(full.emotion == s.emotion);
        pruned_ok += usize::from(pruned.emotion == s.emotion);
        agree += usize::from(full.emotion == pruned.emotion);
        fallbacks += usize::from(pruned.fallback);
        points += pruned.points_examined;
        for e in Emotion::ALL {
            let truth_absent = s.emotion != e;
            full_hits[e.index()] += usize::from((full.scores[e.index()] >= 0.0) == truth_absent);
        }
        let mut x = extract_features(&bundle.config, bundle.pca.as_ref(), s, &everything)?;
        bundle.scaler.apply(&mut x);
        for det in &bundle.pruned {
            let sub = super::select_blocks(&x, &det.points, block);
            let absent = det.model.score(&sub) >= 0.0;
            pruned_hits[det.emotion.index()] += usize::from(absent == (s.emotion != det.emotion));
        }
    }

    let (full_time, pruned_time) = time_pair(
        samples,
        |s| {
            classify_full(bundle, s).map(|d| {
                std::hint::black_box(d);
            })
        },
        |s| {
            classify_pruned(bundle, s, None).map(|d| {
                std::hint::black_box(d);
            })
        },
    )?;

    let detectors = Emotion::ALL
        .iter()
        .map(|&e| {
            let f = &bundle.detectors[e.index()].model;
            let p = &bundle.pruned[e.index()].model;
            DetectorRow {
                label: e.absence_label(),
                full_correctness: full_hits[e.index()] as f64 / n,
                full_sv: f.sv_count,
                full_margin: f.margin,
                pruned_correctness: pruned_hits[e.index()] as f64 / n,
                pruned_sv: p.sv_count,
                pruned_margin: p.margin,
            }
        })
        .collect();

    Ok(BenchReport {
        samples: samples.len(),
        rows,
        mean_reduction,
        full_time,
        pruned_time,
        full_accuracy: full_ok as f64 / n,
        pruned_accuracy: pruned_ok as f64 / n,
        agreement: agree as f64 / n,
        fallback_rate: fallbacks as f64 / n,
        mean_points_examined: points as f64 / n,
        detectors,
    })
}

impl BenchReport {
    /// Three tab-separated tables separated by blank lines: point counts per
    /// emotion, detector statistics, and summary metrics.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("emotion\tfull_points\tpruned_points\treduction\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:?}",
                r.emotion, r.full_points, r.pruned_points, r.reduction
            );
        }
        out.push_str("\ndetector\tfull_sv\tfull_margin\tfull_correctness\tpruned_sv\tpruned_margin\tpruned_correctness\n");
        for d in &self.detectors {
            let _ = writeln!(
                out,
                "{}\t{}\t{:?}\t{:?}\t{}\t{:?}\t{:?}",
                d.label,
                d.full_sv,
                d.full_margin,
                d.full_correctness,
                d.pruned_sv,
                d.pruned_margin,
                d.pruned_correctness
            );
        }
        out.push_str("\nmetric\tvalue\n");
        let metrics: [(&str, f64); 9] = [
            ("samples", self.samples as f64),
            ("mean_reduction", self.mean_reduction),
            ("full_seconds_per_sample", self.full_time),
            ("pruned_seconds_per_sample", self.pruned_time),
            ("full_accuracy", self.full_accuracy),
            ("pruned_accuracy", self.pruned_accuracy),
            ("agreement", self.agreement),
            ("fallback_rate", self.fallback_rate),
            ("mean_points_examined", self.mean_points_examined),
        ];
        for (k, v) in metrics {
            let _ = writeln!(out, "{k}\t{v:?}");
        }
        out
    }

    /// Human-readable tables in the layout of the published ones.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let table =
            |out: &mut String, title: &str, pick: &dyn Fn(&DetectorRow) -> (usize, f64, f64)| {
                let _ = writeln!(out, "{title}");
                let _ = writeln!(
                    out,
                    "{:<10}{:>10}{:>10}{:>13}",
                    "Emotions", "SV number", "Margin", "Correctness"
                );
                for d in &self.detectors {
                    let (sv, margin, correct) = pick(d);
                    let _ = writeln!(
                        out,
                        "{:<10}{:>10}{:>10.3}{:>12.1} %",
                        d.label,
                        sv,
                        margin,
                        100.0 * correct
                    );
                }
                out.push('\n');
            };
        table(&mut out, "Emotion recognition using just SVM", &|d| {
            (d.full_sv, d.full_margin, d.full_correctness)
        });
        table(
            &mut out,
            "Emotion recognition using proposed method",
            &|d| (d.pruned_sv, d.pruned_margin, d.pruned_correctness),
        );
        let _ = writeln!(out, "Execution efficiency of the proposed method");
        let _ = writeln!(
            out,
            "{:<10}{:>14}{:>14}{:>11}",
            "Emotions", "Points (old)", "Points (new)", "Reduction"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<10}{:>14}{:>14}{:>10.1}%",
                r.emotion.absence_label(),
                r.full_points,
                r.pruned_points,
                100.0 * r.reduction
            );
        }
        let _ = writeln!(
            out,
            "mean point reduction: {:.1}%",
            100.0 * self.mean_reduction
        );
        let _ = writeln!(
            out,
            "time per sample: full {:.3} us, pruned {:.3} us ({:.1}% faster)",
            1e6 * self.full_time,
            1e6 * self.pruned_time,
            100.0 * (1.0 - self.pruned_time / self.full_time)
        );
        let _ = writeln!(
            out,
            "accuracy: full {:.1}%, pruned {:.1}%; agreement {:.1}%; fallback {:.1}%; points examined {:.2} on average ({} samples)",
            100.0 * self.full_accuracy,
            100.0 * self.pruned_accuracy,
            100.0 * self.agreement,
            100.0 * self.fallback_rate,
            self.mean_points_examined,
            self.samples
        );
        out
    }
}
