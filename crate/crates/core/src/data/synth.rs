use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream;

fn class_means(classes: usize, dimension: usize, separation: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, "means", 0);
    if dimension >= classes {
        // scaled axes, shuffled
        let mut axes: Vec<usize> = (0..dimension).collect();
        axes.shuffle(&mut rng);
        (0..classes)
            .map(|k| {
                let mut m = vec![0.0; dimension];
                m[axes[k]] = separation;
                m
            })
            .collect()
    } else if dimension >= 2 {
        // evenly spaced on a circle of radius `separation`, random phase
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        (0..classes)
            .map(|k| {
                let a = phase + 2.0 * PI * k as f64 / classes as f64;
                let mut m = vec![0.0; dimension];
                m[0] = separation * a.cos();
                m[1] = separation * a.sin();
                m
            })
            .collect()
    } else {
        let mid = (classes - 1) as f64 / 2.0;
        (0..classes).map(|k| vec![separation * (k as f64 - mid)]).collect()
    }
}

/// Unit-variance Gaussian clusters, one per class, rows shuffled.
pub fn gen_gaussian_mixture(
    classes: usize,
    per_class: usize,
    dimension: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::config("dataset.classes", "must be at least 2"));
    }
    if per_class == 0 || dimension == 0 {
        return Err(Error::config("dataset", "counts and dimension must be positive"));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::config("dataset.separation", "must be positive"));
    }
    let means = class_means(classes, dimension, separation, seed);
    let mut order: Vec<usize> = (0..classes * per_class).map(|i| i / per_class).collect();
    order.shuffle(&mut stream(seed, "mixture-order", 0));
    let mut rng = stream(seed, "mixture", 0);
    let mut features = Vec::with_capacity(order.len() * dimension);
    for &k in &order {
        for m in &means[k] {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(m + z);
        }
    }
    Dataset::new(features, order, vec![dimension], classes)
}

/// Keeps `round(count_k * profile[k])` samples of each class `k`, chosen by
/// a seeded shuffle; classes past the end of `profile` keep everything.
pub fn gen_imbalanced(base: &Dataset, profile: &[f64], seed: u64) -> Result<Dataset> {
    if profile.len() > base.classes() {
        return Err(Error::config(
            "dataset.imbalance",
            format!("profile has {} entries but there are {} classes", profile.len(), base.classes()),
        ));
    }
    if profile.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(Error::config("dataset.imbalance", "ratios must be in (0, 1]"));
    }
    let mut keep = vec![false; base.len()];
    for (k, &ratio) in profile.iter().chain(std::iter::repeat(&1.0)).take(base.classes()).enumerate() {
        let mut members: Vec<usize> = (0..base.len()).filter(|&i| base.labels()[i] == k).collect();
        let target = (members.len() as f64 * ratio).round() as usize;
        members.shuffle(&mut stream(seed, "imbalance", k as u64));
        for &i in &members[..target] {
            keep[i] = true;
        }
    }
    let idx: Vec<usize> = (0..base.len()).filter(|&i| keep[i]).collect();
    Ok(base.subset(&idx))
}
