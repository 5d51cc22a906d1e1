use kmle::select::{bic_penalty, cyclic_descent, grid_search, SelectConfig};
use kmle::synth::{gen_dataset, GenSpec};
use kmle::Dataset;
use proptest::prelude::*;

proptest! {
    #[test]
    fn penalty_increases_with_k(k in 1usize..20, p in 1usize..8, m in 1usize..5, n in 1usize..100, extra in 2usize..200) {
        let t = p + extra;
        prop_assert!(bic_penalty(k + 1, p, m, n, t) > bic_penalty(k, p, m, n, t));
    }
}

#[test]
fn identical_series_choose_smallest_k() {
    let one = gen_dataset(&GenSpec::new(2, 1, 80, 1, 1, 2)).unwrap();
    let copies = Dataset::new(vec![one.dataset.get(0).clone(); 8]).unwrap();
    let table = grid_search(&copies, &[1, 2, 3], &[1], &SelectConfig::default()).unwrap();
    assert_eq!(table.best_cell().unwrap().k, 1);
}

#[test]
fn cyclic_from_grid_argmin_stops_there() {
    let data = gen_dataset(&GenSpec::new(2, 2, 120, 3, 6, 21)).unwrap();
    let cfg = SelectConfig::default();
    let ks = [1, 2, 3, 4];
    let ps = [1, 2, 3];
    let grid = grid_search(&data.dataset, &ks, &ps, &cfg).unwrap();
    let best = grid.best_cell().unwrap();
    let cyc = cyclic_descent(&data.dataset, &ks, &ps, (best.k, best.p), &cfg).unwrap();
    let found = cyc.best_cell().unwrap();
    assert_eq!((found.k, found.p), (best.k, best.p));
    assert!(cyc.visited.len() <= ks.len() + ps.len());
}

#[test]
fn cyclic_visits_are_bounded_and_consistent_with_grid() {
    let data = gen_dataset(&GenSpec::new(2, 2, 120, 3, 6, 22)).unwrap();
    let cfg = SelectConfig::default();
    let ks = [1, 2, 3, 4, 5];
    let ps = [1, 2, 3];
    let grid = grid_search(&data.dataset, &ks, &ps, &cfg).unwrap();
    let cyc = cyclic_descent(&data.dataset, &ks, &ps, (1, 1), &cfg).unwrap();
    assert!(cyc.visited.len() <= ks.len() * ps.len());
    assert!(cyc.best_cell().unwrap().bic >= grid.best_cell().unwrap().bic);
    for c in cyc.scored() {
        assert_eq!(grid.cell(c.k, c.p).unwrap().bic, c.bic);
    }
}
