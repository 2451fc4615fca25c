mod support;

use proptest::prelude::*;
use shmx_core::granger::{gc_analysis, general_causality, pairwise_conditional_f, select_suppressible};
use shmx_core::signal::GroupPartition;
use support::*;

fn group_cols(id: u32) -> Vec<usize> {
    let base = 2 * (id as usize - 1);
    vec![base, base + 1]
}

#[test]
fn matches_normal_equation_oracle_on_every_pair() {
    let rows = three_group_process(10_000, 3);
    let u = series(100.0, THREE_GROUP_LABELS, &rows);
    let groups = GroupPartition::parse(THREE_GROUPS).unwrap();
    for x in 1..=3u32 {
        for y in (1..=3u32).filter(|&y| y != x) {
            let z = 6 - x - y;
            let f = pairwise_conditional_f(&u, &groups, x, y, 2).unwrap();
            let oracle = gc_oracle(&rows, &group_cols(x), &group_cols(y), &group_cols(z), 2);
            assert!((f - oracle).abs() < 1e-10, "F({y}->{x}) = {f}, oracle {oracle}");
        }
    }
}

#[test]
fn recovers_the_driving_direction_only() {
    let u = series(100.0, THREE_GROUP_LABELS, &three_group_process(100_000, 4));
    let groups = GroupPartition::parse(THREE_GROUPS).unwrap();
    let table = gc_analysis(&u, &groups, 2).unwrap();
    for r in &table.rows {
        if (r.x, r.y) == (1, 2) {
            assert!(r.f > 0.1, "F(2->1) = {}", r.f);
        } else {
            assert!(r.f < 0.01, "F({}->{}) = {}", r.y, r.x, r.f);
        }
    }
}

#[test]
fn independent_groups_show_no_causality() {
    let u = series(100.0, THREE_GROUP_LABELS, &white(100_000, 6, 1.0, 9));
    let table = gc_analysis(&u, &GroupPartition::parse(THREE_GROUPS).unwrap(), 2).unwrap();
    assert!(table.rows.iter().all(|r| r.f.abs() < 0.01), "{:?}", table.rows);
}

#[test]
fn two_groups_reduce_to_bivariate_tests() {
    let rows = three_group_process(5_000, 5);
    let u = series(100.0, "z1x,z1y,z2x,z2y", &rows.iter().map(|r| r[..4].to_vec()).collect());
    let groups = GroupPartition::parse("1:z1x,z1y;2:z2x,z2y").unwrap();
    let f = pairwise_conditional_f(&u, &groups, 1, 2, 3).unwrap();
    let sub: Rows = rows.iter().map(|r| r[..4].to_vec()).collect();
    assert!((f - gc_oracle(&sub, &[0, 1], &[2, 3], &[], 3)).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn causality_is_nonnegative_and_scale_free(
        seed in any::<u64>(),
        n in 300usize..1500,
        coupling in -0.4f64..0.4,
        p in 1usize..4,
        channel in 0usize..4,
        log_scale in -3.0f64..3.0,
        negative in any::<bool>(),
    ) {
        let labels = COUPLED_LABELS;
        let groups = GroupPartition::parse(COUPLED_GROUPS).unwrap();
        let rows = coupled_process(seed, n, coupling);
        let base = gc_analysis(&series(50.0, labels, &rows), &groups, p).unwrap();
        for r in &base.rows {
            prop_assert!(r.f >= -1e-12, "F({}->{}) = {}", r.y, r.x, r.f);
        }

        let factor = 10f64.powf(log_scale) * if negative { -1.0 } else { 1.0 };
        let mut scaled_rows = rows.clone();
        scaled_rows.iter_mut().for_each(|r| r[channel] *= factor);
        let scaled = gc_analysis(&series(50.0, labels, &scaled_rows), &groups, p).unwrap();
        for (a, b) in base.rows.iter().zip(&scaled.rows) {
            prop_assert!((a.f - b.f).abs() < 1e-8, "F({}->{}) {} vs {}", a.y, a.x, a.f, b.f);
        }
        for count in 1..3 {
            prop_assert_eq!(
                select_suppressible(&general_causality(&base), count).unwrap(),
                select_suppressible(&general_causality(&scaled), count).unwrap()
            );
        }
    }
}
