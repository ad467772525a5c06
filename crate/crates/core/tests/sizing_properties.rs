use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zonekit_core::costmodel::CostWeights;
use zonekit_core::geometry::{UserPose, Vec3};
use zonekit_core::ids::{AppId, ZoneId};
use zonekit_core::layout::{TemplateKind, ZoneSpec};
use zonekit_core::recommender::{Goal, RelevanceSet};
use zonekit_core::sizing::{cell_area, optimize_zone, SizingConfig, ZoneInputs};
use zonekit_core::telemetry::TransitionMatrix;

struct Instance {
    zone: ZoneSpec<f64>,
    relevance: RelevanceSet<f64>,
    transitions: TransitionMatrix<f64>,
}

fn instance(rng: &mut ChaCha8Rng, pose: &UserPose<f64>) -> Instance {
    let kind = TemplateKind::CELL_TEMPLATES[rng.gen_range(1..6)];
    let pos = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5), rng.gen_range(1.0..3.0));
    let mut zone = ZoneSpec::new(ZoneId(1), kind, rng.gen_range(0.5..2.0), rng.gen_range(0.4..1.5), pos, None, pose).unwrap();
    let n = rng.gen_range(1..=zone.cells.len());
    let ids: Vec<AppId> = (0..n).map(|i| AppId::new(format!("a{i}"))).collect();
    let mut cells: Vec<usize> = (0..zone.cells.len()).collect();
    for (i, id) in ids.iter().enumerate() {
        let j = rng.gen_range(i..cells.len());
        cells.swap(i, j);
        zone.cells[cells[i]].occupant = Some(id.clone());
    }
    let relevance = RelevanceSet::new(Goal::typed("t").unwrap(), ids.iter().map(|a| (a.clone(), rng.gen())).collect());
    let mut transitions = TransitionMatrix::zeros(ids);
    for i in 0..n {
        let row: Vec<f64> = (0..n).map(|j| if i == j { 0.0 } else { rng.gen() }).collect();
        let s: f64 = row.iter().sum();
        for j in 0..n {
            transitions.p[i][j] = if s > 0.0 { row[j] / s } else { 0.0 };
        }
    }
    Instance { zone, relevance, transitions }
}

fn optimum(inst: &Instance, lambda_s: f64, pose: &UserPose<f64>) -> zonekit_core::layout::ThetaParams<f64> {
    let w = CostWeights::default();
    let cfg = SizingConfig { lambda_s, ..SizingConfig::default() };
    let inputs = ZoneInputs { relevance: &inst.relevance, transitions: &inst.transitions, weights: &w, config: &cfg, pose };
    optimize_zone(&inst.zone, &inputs).unwrap().theta_star
}

#[test]
fn weighted_area_nondecreasing_in_lambda_s() {
    let pose = UserPose::origin();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..300 {
        let inst = instance(&mut rng, &pose);
        let weighted = |th| -> f64 {
            inst.zone.occupied().map(|(c, a)| inst.relevance.score(a).unwrap() * cell_area(&inst.zone, c.index, th).unwrap()).sum()
        };
        let mut prev = f64::NEG_INFINITY;
        for ls in [0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0] {
            let v = weighted(optimum(&inst, ls, &pose));
            assert!(v >= prev - 1e-12, "weighted area fell from {prev} to {v} at λs={ls}");
            prev = v;
        }
    }
}

#[test]
fn top_app_share_nondecreasing_for_positive_lambda_s() {
    let pose = UserPose::origin();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..300 {
        let inst = instance(&mut rng, &pose);
        let top = inst.relevance.by_relevance()[0].app.clone();
        let cell = inst.zone.cells.iter().position(|c| c.occupant.as_ref() == Some(&top)).unwrap();
        let area = inst.zone.width * inst.zone.height;
        let mut prev = f64::NEG_INFINITY;
        for ls in [0.1, 0.25, 0.5, 1.0, 2.0, 5.0] {
            let share = cell_area(&inst.zone, cell, optimum(&inst, ls, &pose)).unwrap() / area;
            assert!(share >= prev - 1e-12, "top share fell from {prev} to {share} at λs={ls}");
            prev = share;
        }
    }
}
