//! Action units, emotions and the static AU tables the rule engine works from.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::facegeo::FeaturePointId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("AU {0} is not part of the modeled action-unit inventory")]
    UnknownAu(u32),
    #[error("unknown emotion `{0}`")]
    UnknownEmotion(String),
    #[error("a composite pattern needs at least two action units")]
    CompositeTooSmall,
    #[error("no tabulated transition rule from {from} to {to}; use derive_transition_rule")]
    UnsupportedTransition { from: Emotion, to: Emotion },
}

/// The FACS action units that appear in the emotion tables.
const MODELED_AUS: [u8; 16] = [1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 16, 17, 20, 23, 26];

/// A FACS action unit restricted to the 16 ids used by the tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionUnit(u8);

impl ActionUnit {
    pub fn new(id: u32) -> Result<Self, RuleError> {
        if MODELED_AUS.iter().any(|&m| u32::from(m) == id) {
            Ok(ActionUnit(id as u8))
        } else {
            Err(RuleError::UnknownAu(id))
        }
    }

    pub fn id(self) -> u32 {
        u32::from(self.0)
    }

    pub fn all() -> impl Iterator<Item = ActionUnit> {
        MODELED_AUS.iter().map(|&id| ActionUnit(id))
    }

    pub fn is_observable(self) -> bool {
        matches!(au_bindings(self), AuMapping::Bound(_))
    }
}

impl fmt::Display for ActionUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<u32> for ActionUnit {
    type Error = RuleError;

    fn try_from(id: u32) -> Result<Self, Self::Error> {
        ActionUnit::new(id)
    }
}

/// A set of action units stored as a bit mask indexed by AU id.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct AuSet(u32);

const fn mask(ids: &[u8]) -> u32 {
    let mut m = 0u32;
    let mut i = 0;
    while i < ids.len() {
        m |= 1 << ids[i];
        i += 1;
    }
    m
}

impl AuSet {
    pub const EMPTY: AuSet = AuSet(0);

    const fn from_ids_const(ids: &[u8]) -> AuSet {
        AuSet(mask(ids))
    }

    pub fn from_ids(ids: &[u32]) -> Result<AuSet, RuleError> {
        ids.iter()
            .map(|&id| ActionUnit::new(id))
            .collect::<Result<AuSet, _>>()
    }

    pub fn all() -> AuSet {
        AuSet(mask(&MODELED_AUS))
    }

    pub fn single(au: ActionUnit) -> AuSet {
        AuSet(1 << au.0)
    }

    pub fn contains(self, au: ActionUnit) -> bool {
        self.0 & (1 << au.0) != 0
    }

    pub fn insert(&mut self, au: ActionUnit) {
        self.0 |= 1 << au.0;
    }

    pub fn remove(&mut self, au: ActionUnit) {
        self.0 &= !(1 << au.0);
    }

    pub fn union(self, other: AuSet) -> AuSet {
        AuSet(self.0 | other.0)
    }

    pub fn intersection(self, other: AuSet) -> AuSet {
        AuSet(self.0 & other.0)
    }

    pub fn difference(self, other: AuSet) -> AuSet {
        AuSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: AuSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: AuSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Members in ascending id order.
    pub fn iter(self) -> impl Iterator<Item = ActionUnit> {
        (0u8..32)
            .filter(move |b| self.0 & (1 << b) != 0)
            .map(ActionUnit)
    }

    pub fn ids(self) -> Vec<u32> {
        self.iter().map(ActionUnit::id).collect()
    }
}

impl FromIterator<ActionUnit> for AuSet {
    fn from_iter<I: IntoIterator<Item = ActionUnit>>(iter: I) -> Self {
        let mut s = AuSet::EMPTY;
        for au in iter {
            s.insert(au);
        }
        s
    }
}

impl fmt::Debug for AuSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for AuSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.iter().map(|a| a.to_string()).collect();
        write!(f, "{{{}}}", ids.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Emotion {
    Surprise,
    Fear,
    Disgust,
    Anger,
    Happiness,
    Sadness,
}

impl Emotion {
    pub const ALL: [Emotion; 6] = [
        Emotion::Surprise,
        Emotion::Fear,
        Emotion::Disgust,
        Emotion::Anger,
        Emotion::Happiness,
        Emotion::Sadness,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Surprise => "Surprise",
            Emotion::Fear => "Fear",
            Emotion::Disgust => "Disgust",
            Emotion::Anger => "Anger",
            Emotion::Happiness => "Happiness",
            Emotion::Sadness => "Sadness",
        }
    }

    /// Label of the "not this emotion" detector.
    pub fn absence_label(self) -> &'static str {
        match self {
            Emotion::Surprise => "NSur",
            Emotion::Fear => "NF",
            Emotion::Disgust => "ND",
            Emotion::Anger => "NA",
            Emotion::Happiness => "NH",
            Emotion::Sadness => "NSad",
        }
    }

    pub fn from_absence_label(label: &str) -> Option<Emotion> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.absence_label() == label)
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Emotion::ALL
            .into_iter()
            .find(|e| e.name().to_ascii_lowercase() == lower)
            .ok_or_else(|| RuleError::UnknownEmotion(s.to_string()))
    }
}

/// A single AU or an AU-tuple whose members must all be present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AuPattern {
    Single(ActionUnit),
    Composite(AuSet),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    Single,
    Composite,
}

impl AuPattern {
    pub fn composite(units: AuSet) -> Result<Self, RuleError> {
        if units.len() < 2 {
            return Err(RuleError::CompositeTooSmall);
        }
        Ok(AuPattern::Composite(units))
    }

    /// Single for one unit, composite otherwise. `None` for an empty set.
    pub fn of_set(units: AuSet) -> Option<Self> {
        match units.len() {
            0 => None,
            1 => units.iter().next().map(AuPattern::Single),
            _ => Some(AuPattern::Composite(units)),
        }
    }

    pub fn kind(&self) -> PatternKind {
        match self {
            AuPattern::Single(_) => PatternKind::Single,
            AuPattern::Composite(_) => PatternKind::Composite,
        }
    }

    pub fn units(&self) -> AuSet {
        match *self {
            AuPattern::Single(au) => AuSet::single(au),
            AuPattern::Composite(s) => s,
        }
    }

    pub fn matches(&self, present: AuSet) -> bool {
        self.units().is_subset(present)
    }
}

impl fmt::Display for AuPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuPattern::Single(au) => write!(f, "{au}"),
            AuPattern::Composite(s) => {
                let ids: Vec<String> = s.iter().map(|a| a.to_string()).collect();
                write!(f, "({})", ids.join(","))
            }
        }
    }
}

const fn au(id: u8) -> ActionUnit {
    ActionUnit(id)
}

const fn set(ids: &[u8]) -> AuSet {
    AuSet::from_ids_const(ids)
}

/// AUs involved in each basic emotion.
pub fn emotion_aus(e: Emotion) -> AuSet {
    match e {
        Emotion::Surprise => set(&[1, 2, 5, 15, 16, 20, 26]),
        Emotion::Fear => set(&[1, 2, 4, 5, 15, 20, 26]),
        Emotion::Disgust => set(&[2, 4, 9, 15, 17]),
        Emotion::Anger => set(&[2, 4, 7, 9, 10, 20, 26]),
        Emotion::Happiness => set(&[1, 6, 12, 14]),
        Emotion::Sadness => set(&[1, 4, 15, 23]),
    }
}

/// Patterns whose presence singles out an emotion; any one match suffices.
pub fn unique_patterns(e: Emotion) -> Vec<AuPattern> {
    use AuPattern::*;
    match e {
        Emotion::Surprise => vec![Single(au(16))],
        Emotion::Fear => vec![Composite(set(&[4, 5]))],
        Emotion::Disgust => vec![Single(au(17))],
        Emotion::Anger => vec![Single(au(10))],
        Emotion::Happiness => vec![Single(au(6)), Single(au(12)), Single(au(14))],
        Emotion::Sadness => vec![Single(au(23))],
    }
}

/// AUs that never occur in an emotion; observing any of them rules it out.
pub fn absence_aus(e: Emotion) -> AuSet {
    match e {
        Emotion::Surprise => set(&[4, 6, 23]),
        Emotion::Fear => set(&[6, 9, 16, 23]),
        Emotion::Disgust => set(&[1, 7]),
        Emotion::Anger => set(&[1, 5, 23]),
        Emotion::Happiness => set(&[2, 4, 5, 9, 10, 16, 17, 20]),
        Emotion::Sadness => set(&[2, 5, 6, 9, 10, 16, 20]),
    }
}

/// Presence/absence evidence for a change from one emotion to another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRule {
    pub from: Emotion,
    pub to: Emotion,
    /// Any pattern may match; a composite needs all its units.
    pub present: Vec<AuPattern>,
    pub absent: AuSet,
    /// Set for rules produced by [`derive_transition_rule`].
    pub derived: bool,
}

impl TransitionRule {
    pub fn present_aus(&self) -> AuSet {
        self.present
            .iter()
            .fold(AuSet::EMPTY, |acc, p| acc.union(p.units()))
    }

    /// Closed-world check: some present pattern matches and none of the
    /// absent AUs is in `present`.
    pub fn fires(&self, present: AuSet) -> bool {
        self.present.iter().any(|p| p.matches(present)) && self.absent.is_disjoint(present)
    }

    /// The rule seen through a restricted attribute set: every pattern and
    /// the absent set are intersected with `attrs`. Patterns left empty are
    /// dropped.
    pub fn restricted_to(&self, attrs: AuSet) -> TransitionRule {
        TransitionRule {
            from: self.from,
            to: self.to,
            present: self
                .present
                .iter()
                .filter_map(|p| AuPattern::of_set(p.units().intersection(attrs)))
                .collect(),
            absent: self.absent.intersection(attrs),
            derived: self.derived,
        }
    }
}

/// The tabulated transition rules. Only transitions out of Surprise exist.
///
/// Surprise -> Disgust is printed with AU 9 both present and absent; AU 9 is
/// kept as present and dropped from the absent set.
pub fn transition_rule(from: Emotion, to: Emotion) -> Result<TransitionRule, RuleError> {
    use AuPattern::*;
    let unsupported = RuleError::UnsupportedTransition { from, to };
    if from != Emotion::Surprise {
        return Err(unsupported);
    }
    let (present, absent) = match to {
        Emotion::Surprise => return Err(unsupported),
        Emotion::Fear => (vec![Single(au(4))], set(&[7, 9, 10, 17, 23])),
        Emotion::Disgust => (vec![Composite(set(&[4, 9, 17]))], set(&[10, 23])),
        Emotion::Anger => (vec![Composite(set(&[4, 7, 9, 10]))], set(&[17, 23])),
        Emotion::Happiness => (
            vec![Single(au(6)), Single(au(12)), Single(au(14))],
            set(&[4]),
        ),
        Emotion::Sadness => (vec![Composite(set(&[4, 23]))], set(&[7, 9, 10, 17])),
    };
    Ok(TransitionRule {
        from,
        to,
        present,
        absent,
        derived: false,
    })
}

/// Heuristic transition rule for any ordered pair of distinct emotions.
///
/// Present: the AUs `to` adds over `from` (as one pattern) plus the unique
/// patterns of `to`. Absent: unique-pattern AUs of every other emotion,
/// minus anything `to` itself uses. This does not reproduce the tabulated
/// Surprise rules and is flagged `derived`.
pub fn derive_transition_rule(from: Emotion, to: Emotion) -> Result<TransitionRule, RuleError> {
    if from == to {
        return Err(RuleError::UnsupportedTransition { from, to });
    }
    let added = emotion_aus(to).difference(emotion_aus(from));
    let mut present: Vec<AuPattern> = AuPattern::of_set(added).into_iter().collect();
    for p in unique_patterns(to) {
        if !present.contains(&p) {
            present.push(p);
        }
    }
    let others = Emotion::ALL
        .into_iter()
        .filter(|&e| e != to)
        .flat_map(unique_patterns)
        .fold(AuSet::EMPTY, |acc, p| acc.union(p.units()));
    Ok(TransitionRule {
        from,
        to,
        present,
        absent: others.difference(emotion_aus(to)),
        derived: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuAction {
    Up,
    Down,
    Pull,
    Dimple,
    Tight,
    Wrinkle,
    Stretch,
}

/// Observable movement of a feature point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointAction {
    Up,
    Down,
    Stretch,
    Tight,
}

impl fmt::Display for AuAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AuAction::Up => "up",
            AuAction::Down => "down",
            AuAction::Pull => "pull",
            AuAction::Dimple => "dimple",
            AuAction::Tight => "tight",
            AuAction::Wrinkle => "wrinkle",
            AuAction::Stretch => "stretch",
        };
        f.write_str(s)
    }
}

impl fmt::Display for PointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PointAction::Up => "up",
            PointAction::Down => "down",
            PointAction::Stretch => "stretch",
            PointAction::Tight => "tight",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuFeatureBinding {
    pub au: ActionUnit,
    pub au_action: AuAction,
    pub points: [FeaturePointId; 2],
    pub point_action: PointAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuMapping {
    Bound(AuFeatureBinding),
    /// No geometric signature is known for this AU.
    NonObservable,
}

/// Geometric signature of an action unit.
///
/// AU 26 is printed against `mm3, ml3`; it is bound to the `mm3, mm4` pair
/// that carries the other lower-lip "down" actions. AUs 10 and 15 have no
/// binding.
pub fn au_bindings(unit: ActionUnit) -> AuMapping {
    use AuAction as A;
    use FeaturePointId::*;
    use PointAction as P;
    let (au_action, points, point_action) = match unit.0 {
        1 => (A::Up, [Br1, Bl1], P::Up),
        2 => (A::Up, [Br3, Bl3], P::Up),
        4 => (A::Down, [Br1, Bl1], P::Down),
        5 => (A::Up, [Mm1, Mm2], P::Up),
        6 => (A::Up, [Mr1, Ml1], P::Stretch),
        7 => (A::Tight, [Mr1, Ml1], P::Tight),
        9 => (A::Wrinkle, [Br1, Bl1], P::Down),
        12 => (A::Pull, [Mr1, Ml1], P::Stretch),
        14 => (A::Dimple, [Mr1, Ml1], P::Stretch),
        16 => (A::Down, [Mm3, Mm4], P::Down),
        17 => (A::Up, [Mm3, Mm4], P::Up),
        20 => (A::Stretch, [Mr1, Ml1], P::Stretch),
        23 => (A::Tight, [Mr1, Ml1], P::Tight),
        26 => (A::Down, [Mm3, Mm4], P::Down),
        _ => return AuMapping::NonObservable,
    };
    AuMapping::Bound(AuFeatureBinding {
        au: unit,
        au_action,
        points,
        point_action,
    })
}

pub fn observable_aus() -> AuSet {
    ActionUnit::all().filter(|a| a.is_observable()).collect()
}

/// Feature points to watch for a set of patterns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorSet {
    pub points: BTreeSet<FeaturePointId>,
    /// Set when no AU of the patterns has a geometric binding.
    pub unobservable: bool,
}

pub fn features_for_aus(aus: AuSet) -> BTreeSet<FeaturePointId> {
    aus.iter()
        .filter_map(|a| match au_bindings(a) {
            AuMapping::Bound(b) => Some(b.points),
            AuMapping::NonObservable => None,
        })
        .flatten()
        .collect()
}

pub fn features_to_monitor(patterns: &[AuPattern]) -> MonitorSet {
    let aus = patterns
        .iter()
        .fold(AuSet::EMPTY, |acc, p| acc.union(p.units()));
    let points = features_for_aus(aus);
    MonitorSet {
        unobservable: points.is_empty(),
        points,
    }
}

fn patterns_text(ps: &[AuPattern]) -> String {
    let parts: Vec<String> = ps.iter().map(|p| p.to_string()).collect();
    format!("{{{}}}", parts.join(" / "))
}

/// Plain-text dump of every rule table, one tab-separated row per entry.
pub fn format_rule_tables() -> String {
    let mut out = String::new();
    out.push_str("[EMOTION AUS]\n");
    for e in Emotion::ALL {
        out.push_str(&format!("{}\t{}\n", e, emotion_aus(e)));
    }
    out.push_str("\n[UNIQUE PATTERNS]\n");
    for e in Emotion::ALL {
        out.push_str(&format!("{}\t{}\n", e, patterns_text(&unique_patterns(e))));
    }
    out.push_str("\n[ABSENCE AUS]\n");
    for e in Emotion::ALL {
        out.push_str(&format!("{}\t{}\n", e.absence_label(), absence_aus(e)));
    }
    out.push_str("\n[TRANSITIONS]\n");
    for to in Emotion::ALL.into_iter().filter(|&e| e != Emotion::Surprise) {
        let r = transition_rule(Emotion::Surprise, to).expect("tabulated row");
        out.push_str(&format!(
            "{} -> {}\tP: {}\tA: {}\n",
            r.from,
            r.to,
            patterns_text(&r.present),
            r.absent
        ));
    }
    out.push_str("\n[AU BINDINGS]\n");
    for unit in ActionUnit::all() {
        match au_bindings(unit) {
            AuMapping::Bound(b) => out.push_str(&format!(
                "AU{}\t{}\t{},{}\t{}\n",
                unit, b.au_action, b.points[0], b.points[1], b.point_action
            )),
            AuMapping::NonObservable => out.push_str(&format!("AU{unit}\t-\t-\tnon-observable\n")),
        }
    }
    out
}
