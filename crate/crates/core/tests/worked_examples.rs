use a2a_sched::bounds::{fast_worstcase_time, ratio_bound};
use a2a_sched::workload::{gen_adversarial, gen_uniform};
use a2a_sched::*;

fn lift_m1(rows: &[Vec<u64>]) -> DemandMatrix {
    DemandMatrix::from_rows(rows.len(), 1, rows).unwrap()
}

fn unit_topology(n: usize, m: usize) -> Topology {
    Topology::new(n, m, f64::INFINITY, 1.0, 0.0).unwrap()
}

#[test]
fn four_server_example_17_vs_14() {
    let rows = vec![
        vec![0, 2, 4, 5],
        vec![6, 0, 2, 6],
        vec![3, 4, 0, 3],
        vec![5, 4, 5, 0],
    ];
    let d = lift_m1(&rows);
    let t = unit_topology(4, 1);
    let fast = Schedule::build(Scheduler::Fast, &d, &t).unwrap().report(&t).unwrap();
    let so = Schedule::build(Scheduler::Spreadout, &d, &t).unwrap().report(&t).unwrap();
    assert_eq!(fast.timeline.total, 14.0);
    assert_eq!(so.timeline.total, 17.0);
    assert_eq!(fast.optimal_s, 14.0);
}

#[test]
fn three_server_example_9_vs_8() {
    let d = lift_m1(&[vec![0, 5, 3], vec![1, 0, 4], vec![6, 2, 0]]);
    let t = unit_topology(3, 1);
    let f = synthesize_fast(&d, &t).unwrap();
    assert_eq!(f.simulate(&t).unwrap().total, 8.0);
    assert_eq!(simulate_spreadout(&f.server_matrix, &t).unwrap().total, 9.0);
}

#[test]
fn zero_workload_costs_nothing() {
    let t = Topology::new(3, 4, 450e9, 50e9, 1e-5).unwrap();
    let d = DemandMatrix::zeros(3, 4);
    let f = synthesize_fast(&d, &t).unwrap();
    assert!(f.stages.is_empty());
    let tl = f.simulate(&t).unwrap();
    assert_eq!(tl.total, 0.0);
    assert_eq!(simulate_spreadout(&f.server_matrix, &t).unwrap().total, 0.0);
}

#[test]
fn uniform_matrix_spreadout_matches_fast() {
    let rows: Vec<Vec<u64>> = (0..5)
        .map(|i| (0..5).map(|j| if i == j { 0 } else { 40 }).collect())
        .collect();
    let d = lift_m1(&rows);
    let t = unit_topology(5, 1);
    let f = synthesize_fast(&d, &t).unwrap();
    assert_eq!(
        f.simulate(&t).unwrap().total,
        simulate_spreadout(&f.server_matrix, &t).unwrap().total
    );
}

#[test]
fn adversarial_testbed_ratio() {
    let t = Topology::new(4, 8, 450e9, 50e9, 0.0).unwrap();
    let d = gen_adversarial(&t, 1 << 30).unwrap();
    let f = synthesize_fast(&d, &t).unwrap();
    let total = f.simulate(&t).unwrap().total;
    let opt = optimal_time(&f.server_matrix, &t);
    assert!(total / opt <= ratio_bound(&t));
    assert!(total / opt <= 2.12);
    assert!(total <= fast_worstcase_time(&f.server_matrix, &t) * (1.0 + 1e-12));
}

#[test]
fn raw_spreadout_straggles_on_skewed_gpus() {
    let t = Topology::new(4, 8, 450e9, 50e9, 0.0).unwrap();
    let d = gen_adversarial(&t, 1 << 30).unwrap();
    let s = reduce_to_server_level(&d, &t).unwrap();
    let even = simulate_spreadout(&s, &t).unwrap().total;
    let raw = a2a_sched::sim::simulate_spreadout_raw(&d, &t).unwrap().total;
    assert!((raw / even - 8.0).abs() < 1e-9);
}

#[test]
fn timeline_spans_cover_total() {
    let t = Topology::new(4, 4, 9.0, 1.0, 0.0).unwrap();
    let d = gen_uniform(3, &t, 1000).unwrap();
    let tl = synthesize_fast(&d, &t).unwrap().simulate(&t).unwrap();
    let spans = tl.spans();
    let end = spans.iter().map(|s| s.end).fold(0.0, f64::max);
    assert!((end - tl.total).abs() <= tl.total * 1e-12);
    assert!(spans.iter().all(|s| s.start <= s.end));
}
