mod common;

use std::sync::Arc;

use common::{primal_weights, rng, Primal};
use gbayes::quasiposterior::{convention_offset_check, el_weights, et_weights, MeanMoment};
use gbayes::{Dataset, Distribution, Error, ParamGrid, Temperature};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};

fn column(g: &[f64]) -> Vec<Vec<f64>> {
    g.iter().map(|&v| vec![v]).collect()
}

#[test]
fn primal_oracle_reproduces_hand_solution() {
    let (p, v) = primal_weights(&[-0.5, 0.5, 0.5], Primal::El).unwrap();
    for (a, b) in p.iter().zip([0.5, 0.25, 0.25]) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((v - (27.0f64 / 32.0).ln()).abs() < 1e-12);
    let (_, v) = primal_weights(&[-0.5, 0.5, 0.5], Primal::Et).unwrap();
    assert!((v - 0.5 * 1.125f64.ln()).abs() < 1e-12);
}

#[test]
fn duals_match_primal_on_random_small_instances() {
    let mut r = rng(7);
    let mut feasible = 0;
    for _ in 0..500 {
        let n = r.random_range(2..=8);
        let shift: f64 = r.random_range(-1.0..1.0);
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).map(|v: f64| v + shift).collect();
        let gm = column(&g);
        match primal_weights(&g, Primal::El) {
            Some((p, v)) => {
                feasible += 1;
                let el = el_weights(&gm).unwrap();
                assert!(el.converged);
                for (a, b) in el.weights.iter().zip(&p) {
                    assert!((a - b).abs() <= 1e-6, "EL weights {g:?}");
                }
                assert!((el.criterion - v).abs() <= 1e-6);
                let (pw, pv) = primal_weights(&g, Primal::Et).unwrap();
                let et = et_weights(&gm).unwrap();
                for (a, b) in et.weights.iter().zip(&pw) {
                    assert!((a - b).abs() <= 1e-6, "ET weights {g:?}");
                }
                assert!((et.criterion - pv).abs() <= 1e-6);
            }
            None => {
                assert!(matches!(el_weights(&gm), Err(Error::ElInfeasible { .. })), "{g:?}");
                assert!(matches!(et_weights(&gm), Err(Error::EtInfeasible { .. })), "{g:?}");
            }
        }
    }
    assert!(feasible > 250);
}

#[test]
fn convention_offsets_on_random_data() {
    let mut r = rng(11);
    for _ in 0..50 {
        let n = r.random_range(3..=12);
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        let data = Dataset::from_scalars(&xs);
        let grid = Arc::new(ParamGrid::linspace(-1.5, 1.5, 13).unwrap());
        let prior = Distribution::uniform(grid);
        let eta = Temperature::new(r.random_range(0.1..3.0)).unwrap();
        let rep = match convention_offset_check(&data, &MeanMoment, &prior, eta) {
            Ok(rep) => rep,
            Err(Error::AllInfeasible) => continue,
            Err(e) => panic!("{e}"),
        };
        let nf = n as f64;
        assert_eq!(rep.el.offset, nf * nf.ln());
        assert_eq!(rep.et.offset, nf.ln());
        for pair in [&rep.el, &rep.et] {
            assert!(pair.posterior_tv <= 1e-12);
            assert!((pair.delta_log_z - pair.expected_delta_log_z).abs() <= 1e-9);
            assert!(pair.max_offset_error <= 1e-9 * pair.offset.max(1.0));
        }
    }
}

proptest! {
    #[test]
    fn el_criterion_nonpositive(g in prop::collection::vec(-3.0f64..3.0, 2..10)) {
        if let Ok(s) = el_weights(&column(&g)) {
            prop_assert!(s.criterion <= 1e-14);
            let total: f64 = s.weights.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn et_criterion_nonnegative(g in prop::collection::vec(-3.0f64..3.0, 2..10)) {
        if let Ok(s) = et_weights(&column(&g)) {
            prop_assert!(s.criterion >= 0.0);
            prop_assert!(s.constraint_residual <= 1e-8);
        }
    }

    #[test]
    fn centered_data_gives_uniform_weights(g in prop::collection::vec(-3.0f64..3.0, 2..10)) {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        let c: Vec<f64> = g.iter().map(|v| v - mean).collect();
        let el = el_weights(&column(&c)).unwrap();
        prop_assert!(el.criterion.abs() < 1e-12);
        let et = et_weights(&column(&c)).unwrap();
        prop_assert!(et.criterion < 1e-12);
    }
}

#[test]
fn two_moment_instance_satisfies_constraints() {
    let mut r = rng(3);
    let xs: Vec<f64> = (0..30).map(|_| StandardNormal.sample(&mut r)).collect();
    let g: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x - 0.1, (x - 0.1) * (x - 0.1) - 0.9]).collect();
    let el = el_weights(&g).unwrap();
    assert!(el.converged && el.constraint_residual <= 1e-8 && el.criterion < 0.0);
    let et = et_weights(&g).unwrap();
    assert!(et.constraint_residual <= 1e-8 && et.criterion > 0.0);
}
