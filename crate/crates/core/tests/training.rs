use physrec_core::catalog::{generate_synthetic, SyntheticParams};
use physrec_core::kgraph::build_graph;
use physrec_core::neural::forward;
use physrec_core::thermo::{expected_density, train, MappedTable};
use physrec_core::*;

fn small_data() -> Dataset {
    generate_synthetic(SyntheticParams {
        seed: 7,
        n_products: 200,
        n_foods: 60,
        n_users: 80,
        purchases_per_user: 20,
    })
    .unwrap()
}

fn quick(lambda: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        lambda,
        seed,
        epochs: 12,
        model: ModelConfig { d_emb: 32, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn total_loss_falls_on_default_data() {
    let ds = generate_synthetic(SyntheticParams::default()).unwrap();
    let (g, _) = build_graph(&ds, &EncoderConfig::default(), GraphConfig::default()).unwrap();
    let t = ThermoTargets::for_cohort(&ds, &PhysioParams::default());
    let out = train(&g, &t, &TrainConfig { epochs: 8, ..Default::default() }).unwrap();
    let first = out.log.first().unwrap();
    let last = out.log.last().unwrap();
    assert!(last.l_total < first.l_total, "{} -> {}", first.l_total, last.l_total);
    assert!(last.l_rank < first.l_rank);
    assert!(out.params.is_finite());
}

#[test]
fn regularizer_raises_protein_density_on_most_seeds() {
    let ds = small_data();
    let (g, _) = build_graph(&ds, &EncoderConfig::default(), GraphConfig::default()).unwrap();
    let t = ThermoTargets::for_cohort(&ds, &PhysioParams::default());
    let table = MappedTable::from_graph(&g);
    let tau = TrainConfig::default().schedule.tau_end;
    let mut wins = 0;
    let mut seen = Vec::new();
    for seed in 11..16 {
        let density = |lambda: f64| {
            let out = train(&g, &t, &quick(lambda, seed)).unwrap();
            let (emb, _) = forward(&g, &out.params).unwrap();
            expected_density(&emb, &table, tau).unwrap()
        };
        let (plain, shaped) = (density(0.0), density(0.03));
        seen.push((plain, shaped));
        if shaped >= plain {
            wins += 1;
        }
    }
    assert!(wins >= 3, "{seen:?}");
}

#[test]
fn checkpoint_round_trip_keeps_embeddings() {
    let ds = small_data();
    let (g, _) = build_graph(&ds, &EncoderConfig::default(), GraphConfig::default()).unwrap();
    let t = ThermoTargets::for_cohort(&ds, &PhysioParams::default());
    let out = train(&g, &t, &TrainConfig { epochs: 2, ..quick(0.03, 1) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    Checkpoint::from_params(&out.params, 1, serde_json::Value::Null).save(&path).unwrap();
    let back = Checkpoint::load(&path)
        .unwrap()
        .into_params(out.params.node_counts)
        .unwrap();
    let (a, _) = forward(&g, &out.params).unwrap();
    let (b, _) = forward(&g, &back).unwrap();
    assert_eq!(a.h, b.h);
}
