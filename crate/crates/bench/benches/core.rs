//! Throughput of the reductions, linear referencing, batch loading, query
//! evaluation, authorization and log assembly on the shipped fixtures.

use std::hint::black_box;
use std::path::PathBuf;
use std::sync::Arc;

use borelog_core::access::can_read;
use borelog_core::api::Api;
use borelog_core::linref::{LengthUnit, Length, Position, Trajectory};
use borelog_core::log::{fetch_borehole_log, ApiSource};
use borelog_core::model::{EntityId, EntityType};
use borelog_core::query::{evaluate, parse_query, EvalContext};
use borelog_core::reduction::{
    atterberg_reduce, cpt_derive_series, creep_pressure, liquid_limit, plastic_limit, spt_reduce, CasagrandePoint,
    CptPoint, DriveSet, PressuremeterReading,
};
use borelog_core::{Batch, Principal, Store};
use criterion::{criterion_group, criterion_main, Criterion};
use serde_json::Value;

fn fixture(name: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    serde_json::from_str(&std::fs::read_to_string(&path).expect("fixture readable")).expect("fixture is JSON")
}

fn batch(name: &str) -> Batch {
    Batch::from_value(fixture(name)).expect("fixture is a batch")
}

fn fixture_store() -> Store {
    let store = Store::in_memory();
    for name in ["odot-b-001-0-20.json", "cpt-c-10.json"] {
        store.batch_create(&batch(name), &Principal::system()).expect("fixture loads");
    }
    store
}

fn reductions(c: &mut Criterion) {
    let ft = |v| Length::new(v, LengthUnit::Foot);
    let sets = [DriveSet::new(1, 6, ft(0.5)), DriveSet::new(2, 8, ft(0.5)), DriveSet::new(3, 9, ft(0.5))];
    c.bench_function("spt_reduce", |b| b.iter(|| spt_reduce(black_box(&sets), ft(0.5))));

    let trials: Vec<CasagrandePoint> =
        [(16, 35.2), (22, 28.6), (27, 23.1), (32, 17.4)].iter().map(|&(n, w)| CasagrandePoint::new(n, w)).collect();
    c.bench_function("atterberg", |b| {
        b.iter(|| {
            let ll = liquid_limit(black_box(&trials)).unwrap();
            let pl = plastic_limit(black_box(&[11.9, 11.7, 11.4])).unwrap();
            atterberg_reduce(ll, pl)
        })
    });

    let raw = fixture("raw/cpt-c-10.json");
    let rows: Vec<CptPoint> = serde_json::from_value(raw["rows"].clone()).expect("CPT rows");
    c.bench_function("cpt_derive_series", |b| b.iter(|| cpt_derive_series(black_box(&rows))));

    let on = |ps: &[f64], m: f64, k: f64| ps.iter().map(|&p| PressuremeterReading::new(p, m * p + k)).collect::<Vec<_>>();
    let (g2, g3) = (on(&[1.0, 1.5, 2.0, 2.5], 2.0, 0.0), on(&[4.0, 4.5, 5.0], 1.0, 3.0));
    c.bench_function("creep_pressure", |b| b.iter(|| creep_pressure(black_box(&g2), black_box(&g3))));
}

fn linref(c: &mut Criterion) {
    let vertices = [
        Position::new(-81.796858, 39.47466, Some(250.0)),
        Position::new(-81.796850, 39.47465, Some(240.0)),
        Position::new(-81.796840, 39.47463, Some(225.0)),
        Position::new(-81.796825, 39.47460, Some(205.0)),
        Position::new(-81.796810, 39.47458, Some(190.0)),
    ];
    c.bench_function("trajectory_new_and_point", |b| {
        b.iter(|| Trajectory::new(black_box(&vertices)).unwrap().point_at_fraction(black_box(0.37)))
    });
}

fn store_and_query(c: &mut Criterion) {
    let odot = batch("odot-b-001-0-20.json");
    c.bench_function("batch_create_borehole_fixture", |b| {
        b.iter(|| Store::in_memory().batch_create(black_box(&odot), &Principal::system()).unwrap())
    });

    let store = fixture_store();
    let g = store.graph();
    let sys = Principal::system();
    let ctx = EvalContext { graph: &g, principal: &sys, service_root: "http://localhost/v1.1" };
    let plan = parse_query("Observations?$filter=result gt 10 and Datastream/ObservedProperty/name eq 'n_value'&$orderby=id desc")
        .expect("query parses");
    c.bench_function("evaluate_filtered_observations", |b| b.iter(|| evaluate(black_box(&plan), &ctx).unwrap()));
    let expand = parse_query("BhCollarThings(10)?$expand=BhTrajectoryThings($expand=BhSamplings($orderby=atPosition))")
        .expect("query parses");
    c.bench_function("evaluate_collar_expand", |b| b.iter(|| evaluate(black_box(&expand), &ctx).unwrap()));

    let anonymous = Principal::anonymous();
    c.bench_function("can_read_all_observations_anonymous", |b| {
        b.iter(|| g.iter(EntityType::Observation).filter(|o| can_read(&anonymous, o, &g)).count())
    });

    let api = Api::new(Arc::new(fixture_store()), "http://localhost:8080");
    c.bench_function("fetch_borehole_log", |b| {
        b.iter(|| fetch_borehole_log(&mut ApiSource::trusted(&api, Principal::system()), EntityId(10)).unwrap().to_csv())
    });
}

criterion_group!(benches, reductions, linref, store_and_query);
criterion_main!(benches);
