use crate::facegeo::FeaturePointId;
use crate::faucodes::{
    au_bindings, derive_transition_rule, transition_rule, AuMapping, AuPattern, Emotion,
    TransitionRule,
};
use crate::ruleengine::movement_along;
use crate::synthgen::{LabeledSample, Sequence};

use super::{classify_pruned, landmark_displacement, FeatureMode, PipelineError, TrainedBundle};

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEvent {
    pub frame: usize,
    pub from: Emotion,
    pub to: Emotion,
    /// The rule whose present patterns held at `frame`.
    pub evidence: TransitionRule,
    /// The rule was derived rather than tabulated.
    pub heuristic: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

fn delta_of(delta: &[f64], id: FeaturePointId) -> crate::facegeo::Point {
    crate::facegeo::Point::new(delta[2 * id.index()], delta[2 * id.index() + 1])
}

/// A pattern holds when each of its observable AUs moves all bound points
/// along its action by more than `threshold`. AUs without a geometric
/// binding cannot be checked and are skipped.
fn pattern_holds(pattern: &AuPattern, delta: &[f64], threshold: f64) -> bool {
    pattern.units().iter().all(|au| match au_bindings(au) {
        AuMapping::Bound(b) => b
            .points
            .iter()
            .all(|&p| movement_along(b.point_action, p, delta_of(delta, p)) > threshold),
        AuMapping::NonObservable => true,
    })
}

fn rule_for(from: Emotion, to: Emotion) -> TransitionRule {
    transition_rule(from, to)
        .or_else(|_| derive_transition_rule(from, to))
        .expect("distinct emotions")
}

fn nearest_centroid(bundle: &TrainedBundle, d: &[f64]) -> Emotion {
    let dist = |c: &[f64]| c.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    Emotion::ALL
        .into_iter()
        .min_by(|a, b| {
            dist(&bundle.centroids[a.index()]).total_cmp(&dist(&bundle.centroids[b.index()]))
        })
        .expect("six emotions")
}

/// Tracks a landmark sequence against a moving reference frame.
///
/// The state starts as the classification of frame 0, which is also the
/// first reference. A frame whose displacement from the reference exceeds
/// `0.1 * tau` anywhere is an onset; the candidate target is the emotion
/// whose centroid shift from the current state best aligns (cosine) with
/// that displacement. An event is emitted when the candidate's transition
/// rule (tabulated from Surprise, derived otherwise) has a present pattern
/// that holds on the displacement, judged against a quarter of its largest
/// component. After an event the reference follows the face until it stops
/// approaching the new state's centroid.
pub fn detect_transitions(
    bundle: &TrainedBundle,
    seq: &Sequence,
    initial: Option<Emotion>,
) -> Result<Vec<TransitionEvent>, PipelineError> {
    if seq.frames.len() < 2 {
        return Err(PipelineError::SequenceTooShort(seq.frames.len()));
    }
    let disps = seq
        .frames
        .iter()
        .map(|f| {
            landmark_displacement(&LabeledSample {
                neutral: seq.neutral.clone(),
                expressive: f.face.clone(),
                emotion: f.state,
                rendering: None,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut state = match initial {
        Some(e) => e,
        None if bundle.config.mode == FeatureMode::Landmark => {
            let first = LabeledSample {
                neutral: seq.neutral.clone(),
                expressive: seq.frames[0].face.clone(),
                emotion: seq.frames[0].state,
                rendering: None,
            };
            classify_pruned(bundle, &first, None)?.emotion
        }
        None => nearest_centroid(bundle, &disps[0]),
    };
    let onset = 0.1 * bundle.config.tau;
    let mut reference = 0;
    let mut settling = false;
    let mut events = Vec::new();
    for i in 1..disps.len() {
        if settling {
            let target = &bundle.centroids[state.index()];
            let dist = |d: &[f64]| {
                target
                    .iter()
                    .zip(d)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            };
            if dist(&disps[i]) < dist(&disps[i - 1]) {
                continue;
            }
            settling = false;
            reference = i - 1;
        }
        let delta: Vec<f64> = disps[i]
            .iter()
            .zip(&disps[reference])
            .map(|(a, b)| a - b)
            .collect();
        let peak = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak <= onset {
            continue;
        }
        let from = &bundle.centroids[state.index()];
        let Some((to, _)) = Emotion::ALL
            .into_iter()
            .filter(|&e| e != state)
            .map(|e| {
                let shift: Vec<f64> = bundle.centroids[e.index()]
                    .iter()
                    .zip(from)
                    .map(|(a, b)| a - b)
                    .collect();
                (e, cosine(&delta, &shift))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
        else {
            continue;
        };
        let rule = rule_for(state, to);
        if rule
            .present
            .iter()
            .any(|p| pattern_holds(p, &delta, 0.25 * peak))
        {
            events.push(TransitionEvent {
                frame: i,
                from: state,
                to,
                heuristic: rule.derived,
                evidence: rule,
            });
            state = to;
            settling = true;
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{train, PipelineConfig};
    use crate::synthgen::{generate_dataset, generate_sequence, SynthConfig};

    fn bundle() -> TrainedBundle {
        let cfg = SynthConfig {
            per_class: 6,
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        train(&generate_dataset(&cfg).unwrap(), &PipelineConfig::default())
            .unwrap()
            .0
    }

    fn noiseless() -> SynthConfig {
        SynthConfig {
            noise_sigma: 0.0,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn surprise_to_each_target() {
        let b = bundle();
        for to in Emotion::ALL.into_iter().skip(1) {
            let seq = generate_sequence(&[Emotion::Surprise, to], 5, &noiseless()).unwrap();
            let ev = detect_transitions(&b, &seq, None).unwrap();
            assert_eq!(ev.len(), 1, "{to}: {ev:?}");
            assert_eq!((ev[0].from, ev[0].to), (Emotion::Surprise, to));
            assert!(ev[0].frame.abs_diff(5) <= 1);
            assert!(!ev[0].heuristic);
        }
    }

    #[test]
    fn fear_evidence_is_au4() {
        let b = bundle();
        let seq = generate_sequence(&[Emotion::Surprise, Emotion::Fear], 4, &noiseless()).unwrap();
        let ev = detect_transitions(&b, &seq, None).unwrap();
        assert_eq!(
            ev[0].evidence.present,
            vec![AuPattern::Single(
                crate::faucodes::ActionUnit::new(4).unwrap()
            )]
        );
    }

    #[test]
    fn constant_and_chained() {
        let b = bundle();
        let flat = generate_sequence(&[Emotion::Anger], 6, &noiseless()).unwrap();
        assert!(detect_transitions(&b, &flat, None).unwrap().is_empty());
        let chain = generate_sequence(
            &[Emotion::Surprise, Emotion::Happiness, Emotion::Sadness],
            4,
            &noiseless(),
        )
        .unwrap();
        let ev = detect_transitions(&b, &chain, None).unwrap();
        let pairs: Vec<_> = ev.iter().map(|e| (e.from, e.to, e.frame)).collect();
        assert_eq!(pairs.len(), 2, "{pairs:?}");
        assert_eq!(
            (pairs[1].0, pairs[1].1),
            (Emotion::Happiness, Emotion::Sadness)
        );
        assert!(ev[1].heuristic);
        let short = Sequence {
            frames: flat.frames[..1].to_vec(),
            ..flat
        };
        assert!(detect_transitions(&b, &short, None).is_err());
    }
}
