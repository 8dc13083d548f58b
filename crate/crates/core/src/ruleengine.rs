//! AU-set classification, rule decision trees and monitoring plans.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use thiserror::Error;

use crate::facegeo::{Displacement, FeaturePointId, Point};
use crate::faucodes::{
    absence_aus, au_bindings, derive_transition_rule, emotion_aus, features_for_aus,
    features_to_monitor, transition_rule, unique_patterns, ActionUnit, AuMapping, AuPattern, AuSet,
    Emotion, PointAction, RuleError, TransitionRule,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObservationError {
    #[error("AUs {0} are marked both present and absent")]
    Contradiction(AuSet),
}

/// Which AUs are known present and known absent; every other AU is unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AuObservation {
    present: AuSet,
    absent: AuSet,
}

impl AuObservation {
    pub fn new(present: AuSet, absent: AuSet) -> Result<Self, ObservationError> {
        let both = present.intersection(absent);
        if !both.is_empty() {
            return Err(ObservationError::Contradiction(both));
        }
        Ok(AuObservation { present, absent })
    }

    /// Closed world: every modeled AU not listed as present is absent.
    pub fn closed(present: AuSet) -> Self {
        AuObservation {
            present,
            absent: AuSet::all().difference(present),
        }
    }

    pub fn present(&self) -> AuSet {
        self.present
    }

    pub fn absent(&self) -> AuSet {
        self.absent
    }

    pub fn unknown(&self) -> AuSet {
        AuSet::all()
            .difference(self.present)
            .difference(self.absent)
    }

    pub fn is_present(&self, au: ActionUnit) -> bool {
        self.present.contains(au)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmotionDecision {
    Single(Emotion),
    Ambiguous(Vec<Emotion>),
    Indeterminate,
}

impl fmt::Display for EmotionDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmotionDecision::Single(e) => write!(f, "{e}"),
            EmotionDecision::Ambiguous(es) => {
                let names: Vec<&str> = es.iter().map(|e| e.name()).collect();
                write!(f, "ambiguous {{{}}}", names.join(", "))
            }
            EmotionDecision::Indeterminate => f.write_str("indeterminate"),
        }
    }
}

/// An emotion matches when one of its unique patterns is present and none of
/// its absence AUs is.
pub fn classify_observation(obs: &AuObservation) -> EmotionDecision {
    static TABLE: OnceLock<Vec<(Emotion, Vec<AuPattern>, AuSet)>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        Emotion::ALL
            .into_iter()
            .map(|e| (e, unique_patterns(e), absence_aus(e)))
            .collect()
    });
    let mut matches = table
        .iter()
        .filter(|(_, patterns, absent)| {
            patterns.iter().any(|p| p.matches(obs.present)) && absent.is_disjoint(obs.present)
        })
        .map(|(e, _, _)| *e);
    match (matches.next(), matches.next()) {
        (None, _) => EmotionDecision::Indeterminate,
        (Some(e), None) => EmotionDecision::Single(e),
        (Some(a), Some(b)) => {
            EmotionDecision::Ambiguous([a, b].into_iter().chain(matches).collect())
        }
    }
}

/// Emotions ruled out by at least one present absence-AU.
pub fn absent_emotions(obs: &AuObservation) -> BTreeSet<Emotion> {
    Emotion::ALL
        .into_iter()
        .filter(|&e| !absence_aus(e).is_disjoint(obs.present))
        .collect()
}

/// The reduced attribute set the absence tree is restricted to.
pub fn absence_tree_attributes() -> AuSet {
    AuSet::from_ids(&[1, 2, 4, 5, 6, 7, 9]).expect("modeled AUs")
}

/// The attribute set separating transitions out of Surprise.
pub fn transition_tree_attributes() -> AuSet {
    AuSet::from_ids(&[4, 6, 7, 10, 17, 23]).expect("modeled AUs")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TreeLabel {
    /// Emotions ruled out (never empty).
    Absent(BTreeSet<Emotion>),
    Target(Emotion),
    Indeterminate,
}

impl fmt::Display for TreeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeLabel::Absent(es) => {
                let names: Vec<&str> = es.iter().map(|e| e.absence_label()).collect();
                write!(f, "{}", names.join(" "))
            }
            TreeLabel::Target(e) => write!(f, "{e}"),
            TreeLabel::Indeterminate => f.write_str("indeterminate"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeNode {
    Leaf(TreeLabel),
    Split {
        au: ActionUnit,
        present: Box<TreeNode>,
        absent: Box<TreeNode>,
    },
}

impl TreeNode {
    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Split {
                present, absent, ..
            } => 1 + present.depth().max(absent.depth()),
        }
    }
}

/// Binary tree over AU presence tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTree {
    attributes: AuSet,
    root: TreeNode,
}

impl DecisionTree {
    pub fn leaf(label: TreeLabel) -> Self {
        DecisionTree {
            attributes: AuSet::EMPTY,
            root: TreeNode::Leaf(label),
        }
    }

    pub fn attributes(&self) -> AuSet {
        self.attributes
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Label reached when every attribute in `present` is present and every
    /// other attribute is absent.
    pub fn evaluate_assignment(&self, present: AuSet) -> &TreeLabel {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf(l) => return l,
                TreeNode::Split {
                    au,
                    present: yes,
                    absent: no,
                } => node = if present.contains(*au) { yes } else { no },
            }
        }
    }

    /// Indented plain-text rendering.
    pub fn to_text(&self) -> String {
        fn walk(node: &TreeNode, indent: usize, out: &mut String) {
            let pad = "  ".repeat(indent);
            match node {
                TreeNode::Leaf(l) => out.push_str(&format!("{pad}-> {l}\n")),
                TreeNode::Split {
                    au,
                    present,
                    absent,
                } => {
                    out.push_str(&format!("{pad}AU{au} present?\n"));
                    out.push_str(&format!("{pad}  yes:\n"));
                    walk(present, indent + 2, out);
                    out.push_str(&format!("{pad}  no:\n"));
                    walk(absent, indent + 2, out);
                }
            }
        }
        let mut out = format!("attributes {}\n", self.attributes);
        walk(&self.root, 0, &mut out);
        out
    }

    /// Graphviz `digraph` rendering.
    pub fn to_dot(&self) -> String {
        fn walk(node: &TreeNode, next: &mut usize, out: &mut String) -> usize {
            let id = *next;
            *next += 1;
            match node {
                TreeNode::Leaf(l) => {
                    out.push_str(&format!("  n{id} [shape=box, label=\"{l}\"];\n"));
                }
                TreeNode::Split {
                    au,
                    present,
                    absent,
                } => {
                    out.push_str(&format!("  n{id} [label=\"AU{au}\"];\n"));
                    let y = walk(present, next, out);
                    let n = walk(absent, next, out);
                    out.push_str(&format!("  n{id} -> n{y} [label=\"P\"];\n"));
                    out.push_str(&format!("  n{id} -> n{n} [label=\"A\"];\n"));
                }
            }
            id
        }
        let mut out = String::from("digraph tree {\n");
        let mut next = 0;
        walk(&self.root, &mut next, &mut out);
        out.push_str("}\n");
        out
    }
}

fn entropy<'a, I>(labels: I) -> f64
where
    I: IntoIterator<Item = &'a TreeLabel>,
{
    let mut counts: BTreeMap<&TreeLabel, usize> = BTreeMap::new();
    let mut total = 0usize;
    for l in labels {
        *counts.entry(l).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return 0.0;
    }
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

/// Greedy information-gain induction. Ties go to the lowest AU id; splits
/// whose two subtrees come out identical are collapsed.
fn induce(examples: &[(AuSet, TreeLabel)], remaining: AuSet) -> TreeNode {
    let first = &examples[0].1;
    if examples.iter().all(|(_, l)| l == first) {
        return TreeNode::Leaf(first.clone());
    }
    let base = entropy(examples.iter().map(|(_, l)| l));
    let n = examples.len() as f64;
    let mut best: Option<(ActionUnit, f64)> = None;
    for au in remaining.iter() {
        let (yes, no): (Vec<_>, Vec<_>) = examples.iter().partition(|(p, _)| p.contains(au));
        if yes.is_empty() || no.is_empty() {
            continue;
        }
        let split = yes.len() as f64 / n * entropy(yes.iter().map(|(_, l)| l))
            + no.len() as f64 / n * entropy(no.iter().map(|(_, l)| l));
        let gain = base - split;
        if best.is_none_or(|(_, g)| gain > g + 1e-12) {
            best = Some((au, gain));
        }
    }
    let Some((au, _)) = best else {
        // Examples disagree but no attribute separates them: majority label.
        let mut counts: BTreeMap<&TreeLabel, usize> = BTreeMap::new();
        for (_, l) in examples {
            *counts.entry(l).or_default() += 1;
        }
        let label = counts
            .into_iter()
            .max_by_key(|&(_, c)| c)
            .map(|(l, _)| l.clone())
            .expect("non-empty");
        return TreeNode::Leaf(label);
    };
    let mut rest = remaining;
    rest.remove(au);
    let (yes, no): (Vec<_>, Vec<_>) = examples.iter().cloned().partition(|(p, _)| p.contains(au));
    let present = induce(&yes, rest);
    let absent = induce(&no, rest);
    if present == absent {
        return present;
    }
    TreeNode::Split {
        au,
        present: Box::new(present),
        absent: Box::new(absent),
    }
}

/// Every subset of `attrs`, as the set of present AUs.
pub fn assignments(attrs: AuSet) -> Vec<AuSet> {
    let units: Vec<ActionUnit> = attrs.iter().collect();
    (0u32..1 << units.len())
        .map(|bits| {
            units
                .iter()
                .enumerate()
                .filter(|(i, _)| bits & (1 << i) != 0)
                .map(|(_, &a)| a)
                .collect()
        })
        .collect()
}

/// Induces a tree from a labelling function over all assignments of `attrs`.
pub fn induce_tree<F>(attrs: AuSet, mut label: F) -> DecisionTree
where
    F: FnMut(AuSet) -> TreeLabel,
{
    let examples: Vec<(AuSet, TreeLabel)> = assignments(attrs)
        .into_iter()
        .map(|a| (a, label(a)))
        .collect();
    DecisionTree {
        attributes: attrs,
        root: induce(&examples, attrs),
    }
}

/// Absence labelling of an assignment: which emotions its present AUs rule out.
pub fn absence_label(present: AuSet) -> TreeLabel {
    let gone = absent_emotions(&AuObservation::closed(present));
    if gone.is_empty() {
        TreeLabel::Indeterminate
    } else {
        TreeLabel::Absent(gone)
    }
}

pub fn build_absence_tree() -> DecisionTree {
    let attrs = absence_tree_attributes();
    induce_tree(attrs, |present| absence_label(present.intersection(attrs)))
}

/// The tabulated rules out of `from`, restricted to the transition attributes.
pub fn restricted_transition_rules(from: Emotion) -> Result<Vec<TransitionRule>, RuleError> {
    let attrs = transition_tree_attributes();
    Emotion::ALL
        .into_iter()
        .filter(|&to| to != from)
        .map(|to| transition_rule(from, to).map(|r| r.restricted_to(attrs)))
        .collect()
}

/// Target of the single restricted rule that fires, if exactly one does.
pub fn transition_label(rules: &[TransitionRule], present: AuSet) -> TreeLabel {
    let mut fired = rules.iter().filter(|r| r.fires(present));
    match (fired.next(), fired.next()) {
        (Some(r), None) => TreeLabel::Target(r.to),
        _ => TreeLabel::Indeterminate,
    }
}

pub fn build_transition_tree(from: Emotion) -> Result<DecisionTree, RuleError> {
    let rules = restricted_transition_rules(from)?;
    Ok(induce_tree(transition_tree_attributes(), |present| {
        transition_label(&rules, present)
    }))
}

/// Walks the tree; an attribute that is neither present nor absent in the
/// observation ends the walk as indeterminate.
pub fn evaluate_tree(tree: &DecisionTree, obs: &AuObservation) -> TreeLabel {
    let mut node = &tree.root;
    loop {
        match node {
            TreeNode::Leaf(l) => return l.clone(),
            TreeNode::Split {
                au,
                present,
                absent,
            } => {
                node = if obs.present.contains(*au) {
                    present
                } else if obs.absent.contains(*au) {
                    absent
                } else {
                    return TreeLabel::Indeterminate;
                };
            }
        }
    }
}

/// The feature points to check for one emotion hypothesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitoringPlan {
    pub hypothesis: Emotion,
    pub prior: Option<Emotion>,
    pub aus_to_check: Vec<AuPattern>,
    pub points: BTreeSet<FeaturePointId>,
    /// The patterns have no geometric binding; `points` then covers the
    /// mapped AUs of the hypothesis' full AU set.
    pub fallback_full: bool,
}

fn plan_for(
    hypothesis: Emotion,
    prior: Option<Emotion>,
    patterns: Vec<AuPattern>,
) -> MonitoringPlan {
    let monitor = features_to_monitor(&patterns);
    let (points, fallback_full) = if monitor.unobservable {
        (features_for_aus(emotion_aus(hypothesis)), true)
    } else {
        (monitor.points, false)
    };
    MonitoringPlan {
        hypothesis,
        prior,
        aus_to_check: patterns,
        points,
        fallback_full,
    }
}

/// One plan per hypothesis. Without a prior the unique patterns of each
/// emotion drive the plan; with a prior the present patterns of the
/// transition rules out of it do (tabulated for Surprise, derived otherwise).
pub fn plan_monitoring(prior: Option<Emotion>) -> Vec<MonitoringPlan> {
    match prior {
        None => Emotion::ALL
            .into_iter()
            .map(|e| plan_for(e, None, unique_patterns(e)))
            .collect(),
        Some(from) => Emotion::ALL
            .into_iter()
            .filter(|&to| to != from)
            .map(|to| {
                let rule = transition_rule(from, to)
                    .or_else(|_| derive_transition_rule(from, to))
                    .expect("distinct emotions");
                plan_for(to, Some(from), rule.present)
            })
            .collect(),
    }
}

/// Signed amount by which a point displacement moves in the direction of
/// `action`. Left-side points (`*l*`) stretch towards -x, right-side points
/// towards +x; midline points have no stretch direction.
pub fn movement_along(action: PointAction, id: FeaturePointId, delta: Point) -> f64 {
    match action {
        PointAction::Up => delta.y,
        PointAction::Down => -delta.y,
        PointAction::Stretch => lateral_sign(id) * delta.x,
        PointAction::Tight => -lateral_sign(id) * delta.x,
    }
}

pub fn lateral_sign(id: FeaturePointId) -> f64 {
    let name = id.name().as_bytes();
    match name[1] {
        b'l' => -1.0,
        b'r' => 1.0,
        _ => 0.0,
    }
}

/// Thresholded AU observation from a displacement, looking only at `points`.
///
/// An observable AU whose bound points are all watched is present when every
/// bound point moves in its direction by more than `threshold`, absent
/// otherwise. AUs without a binding, or bound to unwatched points, stay
/// unknown.
pub fn observe_aus(
    disp: &Displacement,
    points: &BTreeSet<FeaturePointId>,
    threshold: f64,
) -> AuObservation {
    let mut present = AuSet::EMPTY;
    let mut absent = AuSet::EMPTY;
    for au in ActionUnit::all() {
        let AuMapping::Bound(b) = au_bindings(au) else {
            continue;
        };
        if !b.points.iter().all(|p| points.contains(p)) {
            continue;
        }
        let moved = b
            .points
            .iter()
            .all(|&p| movement_along(b.point_action, p, disp.get(p)) > threshold);
        if moved {
            present.insert(au);
        } else {
            absent.insert(au);
        }
    }
    AuObservation { present, absent }
}
