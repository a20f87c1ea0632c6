use physrec_core::catalog::{generate_synthetic, SyntheticParams};
use physrec_core::evalbench::{write_report_dir, Bench, SeedRun, TABLE_HEADER};
use physrec_core::kgraph::build_graph;
use physrec_core::recommend::Overrides;
use physrec_core::thermo::train;
use physrec_core::*;

const SEEDS: [u64; 2] = [1, 2];

fn small_data() -> Dataset {
    generate_synthetic(SyntheticParams {
        seed: 7,
        n_products: 200,
        n_foods: 60,
        n_users: 60,
        purchases_per_user: 20,
    })
    .unwrap()
}

fn small_config() -> BenchConfig {
    let mut c = BenchConfig::default();
    c.train.epochs = 10;
    c.train.model.d_emb = 32;
    c.opt.iterations = 2000;
    c
}

fn artifacts() -> Artifacts {
    let ds = small_data();
    let config = small_config();
    let (g, _) = build_graph(&ds, &config.encoder, config.graph).unwrap();
    let t = ThermoTargets::for_cohort(&ds, &config.physio);
    let out = train(&g, &t, &config.train).unwrap();
    Artifacts::from_parts(ds, g, &out.params, "test".into()).unwrap()
}

fn stranger() -> UserProfile {
    UserProfile {
        id: String::new(),
        age: 41,
        sex: Sex::Male,
        weight: 84.0,
        height: 181.0,
        activity: Activity::Light,
        goal: Goal::Loss,
    }
}

#[test]
fn recommendation_properties() {
    let a = artifacts();
    let defaults = ServiceDefaults::default();
    let req = RecommendRequest::new(stranger());
    let r = a.recommend(&req, &defaults).unwrap();

    assert!(r.cold_start);
    assert_eq!(r.bundle.len(), defaults.opt.k);
    let mut ids: Vec<&str> = r.bundle.iter().map(|b| b.product_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), r.bundle.len());
    assert!(r.bundle.iter().all(|b| (1..=3).contains(&b.quantity)));

    // totals are the plain quantity-weighted sums, in item order
    let (mut cal, mut prot) = (0.0, 0.0);
    for b in &r.bundle {
        cal += b.quantity as f64 * b.cal;
        prot += b.quantity as f64 * b.prot;
    }
    assert_eq!(r.totals.cal, cal);
    assert_eq!(r.totals.prot, prot);
    assert_eq!(r.success, r.targets.satisfied_by(cal, prot));
    assert_eq!(r.targets, physio_targets(&stranger()));
    assert!(r.trace.len() <= 100);
    assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));

    assert_eq!(r, a.recommend(&req, &defaults).unwrap());
    assert_eq!(r.seed, req.derived_seed());
}

fn physio_targets(p: &UserProfile) -> PhysioTargets {
    PhysioParams::default().targets(p)
}

#[test]
fn known_user_is_not_cold() {
    let a = artifacts();
    let known = a.dataset.users[3].clone();
    let r = a.recommend(&RecommendRequest::new(known.clone()), &ServiceDefaults::default()).unwrap();
    assert!(!r.cold_start);
    let (v, cold) = a.user_vector(&known);
    assert!(!cold);
    assert_eq!(v, a.embeddings.user(3).to_owned());
}

#[test]
fn overrides_shape_the_bundle() {
    let a = artifacts();
    let req = RecommendRequest {
        profile: stranger(),
        overrides: Overrides {
            k: Some(6),
            quantity_max: Some(1),
            seed: Some(42),
            ..Default::default()
        },
    };
    assert!(req.violations().is_empty());
    let r = a.recommend(&req, &ServiceDefaults::default()).unwrap();
    assert_eq!(r.bundle.len(), 6);
    assert!(r.bundle.iter().all(|b| b.quantity == 1));
    assert_eq!(r.seed, 42);

    let bad = RecommendRequest {
        profile: UserProfile { age: 5, ..stranger() },
        overrides: Overrides { k: Some(40), ..Default::default() },
    };
    let fields: Vec<String> = bad.violations().into_iter().map(|f| f.field).collect();
    assert!(fields.contains(&"profile.age".to_string()), "{fields:?}");
    assert!(fields.contains(&"overrides.k".to_string()), "{fields:?}");
}

#[test]
fn ablation_invariants_on_small_data() {
    let mut bench = Bench::new(small_data(), small_config()).unwrap();
    let n_users = bench.dataset.users.len() as f64;
    for id in AblationId::ALL {
        let r = bench.run(id, &SEEDS).unwrap();
        assert_eq!(r.seeds, SEEDS);
        for run in &r.runs {
            assert!((0.0..=1.0).contains(&run.tsr));
            let ok = run.outcomes.iter().filter(|o| o.success).count() as f64;
            assert_eq!(run.tsr, ok / n_users);
            if matches!(id, AblationId::A1 | AblationId::A3) {
                assert_eq!(run.opt_cost, 0.0, "{id}");
            }
            for o in &run.outcomes {
                let q_max = if id == AblationId::A6 { 1 } else { 3 };
                assert!(o.items.items.iter().all(|&(_, q)| q <= q_max));
            }
        }
    }
}

#[test]
fn looser_tolerance_never_lowers_tsr() {
    let mut last = -1.0;
    for tol in [0.08, 0.12, 0.20] {
        let mut config = small_config();
        config.physio.tolerance = tol;
        let mut bench = Bench::new(small_data(), config).unwrap();
        let r = bench.run(AblationId::A4, &SEEDS).unwrap();
        assert!(r.tsr.mean >= last, "tolerance {tol}: {} < {last}", r.tsr.mean);
        last = r.tsr.mean;
    }
}

#[test]
fn report_directory_round_trip() {
    let mut bench = Bench::new(small_data(), small_config()).unwrap();
    let reports = vec![
        bench.run(AblationId::A1, &SEEDS).unwrap(),
        bench.run(AblationId::A4, &SEEDS).unwrap(),
    ];
    let dir = tempfile::tempdir().unwrap();
    write_report_dir(dir.path(), &reports).unwrap();

    for r in &reports {
        for run in &r.runs {
            let text = std::fs::read_to_string(dir.path().join(format!("{}_seed{}.json", r.id, run.seed))).unwrap();
            let back: SeedRun = serde_json::from_str(&text).unwrap();
            assert_eq!(&back, run);
        }
    }
    let mut rd = csv::Reader::from_path(dir.path().join("ablation.csv")).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, TABLE_HEADER);
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "A1");
    assert_eq!(&rows[1][1], "Proposed (Early)");
    let tsr: f64 = rows[1][2].parse().unwrap();
    assert!((tsr - reports[1].tsr.mean).abs() <= 0.05);
    let text = std::fs::read_to_string(dir.path().join("ablation.txt")).unwrap();
    assert!(text.starts_with("ID"));
    assert_eq!(text.lines().count(), 3);
}
