//! Seeded random workspaces for benchmarks and property checks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::assignment::{placement_count, Assignment, AssignmentProblem, EXHAUSTIVE_BUDGET};
use crate::costmodel::{CostContext, CostWeights};
use crate::geometry::{UserPose, Vec3};
use crate::ids::{AppId, ZoneId};
use crate::layout::{TemplateKind, ZoneSpec};
use crate::recommender::{Goal, RelevanceSet};
use crate::telemetry::{estimate_transitions, InteractionEvent, TransitionMatrix};

pub const ZONE_COUNTS: std::ops::RangeInclusive<usize> = 2..=5;
pub const APP_COUNTS: std::ops::RangeInclusive<usize> = 4..=10;

/// Slot spacing around the user, in degrees of azimuth.
const SLOT_DEG: f64 = 38.0;

#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub pose: UserPose<f64>,
    pub zones: Vec<ZoneSpec<f64>>,
    pub relevance: RelevanceSet<f64>,
    pub transitions: TransitionMatrix<f64>,
    pub events: Vec<InteractionEvent>,
}

impl SynthInstance {
    pub fn cell_count(&self) -> usize {
        self.zones.iter().map(|z| z.cells.len()).sum()
    }

    pub fn problem<'a>(&'a self, pinned: &'a Assignment, weights: CostWeights<f64>) -> AssignmentProblem<'a, f64> {
        AssignmentProblem {
            relevance: &self.relevance,
            pinned,
            transitions: &self.transitions,
            ctx: CostContext::new(&self.zones, &self.pose, weights),
        }
    }
}

/// Non-overlapping zones on a ring around the user.
pub fn random_zones<R: Rng>(rng: &mut R, kinds: &[TemplateKind], pose: &UserPose<f64>) -> Vec<ZoneSpec<f64>> {
    let n = kinds.len();
    let first = -SLOT_DEG * (n as f64 - 1.0) / 2.0;
    kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            let az = (first + SLOT_DEG * i as f64).to_radians();
            let d = rng.gen_range(1.8..2.6);
            let y = rng.gen_range(-0.3..0.3);
            let pos = pose.position() + pose.forward().rotate_about_up(az) * d + Vec3::new(0.0, y, 0.0);
            let (w, h) = (rng.gen_range(0.6..1.1), rng.gen_range(0.4..0.9));
            ZoneSpec::new(ZoneId(i as u32 + 1), kind, w, h, pos, None, pose).expect("ring slots are valid zones")
        })
        .collect()
}

/// A random focus log over `apps`.
pub fn random_focus_log<R: Rng>(rng: &mut R, apps: &[AppId], len: usize) -> Vec<InteractionEvent> {
    (0..len).map(|t| InteractionEvent::focus(t as f64, apps.choose(rng).expect("apps nonempty").clone())).collect()
}

/// An instance with 2–5 zones and 4–10 apps whose exhaustive search fits
/// the oracle budget. Out-of-budget draws are redrawn.
pub fn random_instance<R: Rng>(rng: &mut R) -> SynthInstance {
    let pose = UserPose::origin();
    let (kinds, n_apps) = loop {
        let n_zones = rng.gen_range(ZONE_COUNTS);
        let n_apps = rng.gen_range(APP_COUNTS);
        let kinds: Vec<TemplateKind> = (0..n_zones).map(|_| *TemplateKind::CELL_TEMPLATES.choose(rng).expect("nonempty")).collect();
        let cells: usize = kinds.iter().map(|k| k.cell_count()).sum();
        if placement_count(cells, n_apps) <= EXHAUSTIVE_BUDGET {
            break (kinds, n_apps);
        }
    };
    let zones = random_zones(rng, &kinds, &pose);
    let apps: Vec<AppId> = (0..n_apps).map(|i| AppId::new(format!("app{i:02}"))).collect();
    let relevance = RelevanceSet::new(
        Goal::typed("synthetic").expect("literal goal"),
        apps.iter().map(|a| (a.clone(), rng.gen_range(0.05..1.0))).collect(),
    );
    let events = random_focus_log(rng, &apps, 80);
    let transitions = estimate_transitions(&events, &apps, 1.0);
    SynthInstance { pose, zones, relevance, transitions, events }
}
