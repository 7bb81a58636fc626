//! Sharing rules against the integer brute force in `common`.

mod common;

use common::{adjacent_collisions, centralized, decentralized, equal, equal_conserves, neighbourhood_conserves, to_map, Case};
use copss::sharing::{algo2_equal, algo3_all, algo4_centralized};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check(c: &Case) {
    let (ops, reports, adj) = (c.operators(), c.reports(), c.adjacency());
    let e = to_map(&algo2_equal(&ops, &reports));
    assert_eq!(e, equal(c), "equal split differs: {c:?}");
    assert!(equal_conserves(c, &e), "{c:?}");
    let d = to_map(&algo3_all(&ops, &reports, &adj));
    assert_eq!(d, decentralized(c), "decentralized differs: {c:?}");
    assert!(neighbourhood_conserves(c, &d, false), "{c:?}");
    let g = to_map(&algo4_centralized(&ops, &reports, &adj));
    assert_eq!(g, centralized(c), "graph rule differs: {c:?}");
    if reports.iter().filter(|r| r.overloaded()).count() >= 2 {
        assert!(neighbourhood_conserves(c, &g, true), "{c:?}");
    }
    assert_eq!(adjacent_collisions(c, &g), 0, "{c:?}");
}

#[test]
fn random_cases_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20_000 {
        check(&Case::random(&mut rng, 4, 16, 6));
    }
}

#[test]
fn small_bands_match() {
    // Q of 1 or 2 makes every share round to zero or one
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5_000 {
        check(&Case::random(&mut rng, 4, 2, 6));
    }
}

#[test]
fn missing_edge_example() {
    let c = Case { k: 3, q: 4, s: 4, ops: vec![0, 1, 2], ids: vec![0, 1, 2], load: vec![4, 4, 2], edges: vec![(0, 1), (0, 2)] };
    check(&c);
    let d = decentralized(&c);
    assert_eq!(d[&0].iter().copied().collect::<Vec<_>>(), vec![10]);
    assert_eq!(d[&1].iter().copied().collect::<Vec<_>>(), vec![10, 11]);
    assert_eq!(adjacent_collisions(&c, &d), 1);
}

#[test]
fn everyone_full_gets_nothing() {
    let c = Case { k: 4, q: 8, s: 8, ops: vec![0, 1, 2, 3], ids: vec![3, 2, 1, 0], load: vec![8; 4], edges: vec![(0, 1), (1, 2), (2, 3)] };
    check(&c);
    assert!(equal(&c).values().all(|g| g.is_empty()));
}
