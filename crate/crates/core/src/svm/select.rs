use super::kernel::{Gram, Kernel};
use super::model::{check_training_set, train_with_gram, SvmModel, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};
use crate::spam::FeatureNormalizer;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Multipliers of the data-scaled bandwidth `1 / mean‖vᵢ − vⱼ‖²`.
pub const GAMMA_MULTIPLIERS: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub gamma: f64,
    pub c: f64,
    pub cv_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub gamma: f64,
    pub c: f64,
    pub grid: Vec<GridPoint>,
}

/// Bandwidth grid scaled to the data: `GAMMA_MULTIPLIERS / mean‖vᵢ − vⱼ‖²`.
pub fn relative_gamma_grid(distances: &Gram) -> Result<Vec<f64>> {
    let mean = distances.mean_off_diagonal();
    if !(mean > 0.0) {
        return Err(Error::Training("all training vectors coincide".into()));
    }
    Ok(GAMMA_MULTIPLIERS.iter().map(|m| m / mean).collect())
}

/// Fold index per example, stratified by label and shuffled under `seed`.
pub fn stratified_folds(y: &[f64], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(derive_seed(seed, "svm-folds", &[]));
    let mut assign = vec![0; y.len()];
    for class in [1.0, -1.0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            assign[i] = pos % folds;
        }
    }
    assign
}

fn cv_accuracy(
    x: &[Vec<f64>],
    y: &[f64],
    kernel: Kernel,
    gram: &Gram,
    c: f64,
    folds: &[usize],
    config: &TrainConfig,
) -> Result<f64> {
    let mut correct = 0usize;
    for f in 0..config.folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
        let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let (model, _) = train_with_gram(&xt, &yt, kernel, &gram.subset(&train), c, config)
            .map_err(|e| e.context(format!("fold {f}")))?;
        correct += test
            .iter()
            .filter(|&&i| (model.discriminant_prepared(&x[i]) > 0.0) == (y[i] > 0.0))
            .count();
    }
    Ok(correct as f64 / y.len() as f64)
}

/// Cross-validated choice of RBF bandwidth and C on prepared features.
/// Ties go to the smaller gamma, then the smaller C.
pub fn select_hyperparameters(
    x: &[Vec<f64>],
    y: &[f64],
    config: &TrainConfig,
) -> Result<Selection> {
    config.validate()?;
    check_training_set(x, y)?;
    let dist = Gram::sq_distances(x);
    let mut gammas = if config.gamma_grid.is_empty() {
        relative_gamma_grid(&dist)?
    } else {
        config.gamma_grid.clone()
    };
    gammas.sort_by(f64::total_cmp);
    let mut cs = if config.c_grid.is_empty() {
        vec![config.c]
    } else {
        config.c_grid.clone()
    };
    cs.sort_by(f64::total_cmp);
    if gammas.len() == 1 && cs.len() == 1 {
        return Ok(Selection {
            gamma: gammas[0],
            c: cs[0],
            grid: vec![GridPoint {
                gamma: gammas[0],
                c: cs[0],
                cv_accuracy: f64::NAN,
            }],
        });
    }
    let folds = stratified_folds(y, config.folds, config.seed);
    let points: Vec<(f64, f64)> = gammas
        .iter()
        .flat_map(|&g| cs.iter().map(move |&c| (g, c)))
        .collect();
    let grid: Vec<GridPoint> = points
        .par_iter()
        .map(|&(gamma, c)| {
            let gram = dist.rbf_from_distances(gamma);
            let acc = cv_accuracy(x, y, Kernel::Rbf { gamma }, &gram, c, &folds, config)
                .map_err(|e| e.context(format!("gamma {gamma:e}, C {c}")))?;
            Ok(GridPoint {
                gamma,
                c,
                cv_accuracy: acc,
            })
        })
        .collect::<Result<_>>()?;
    let best = grid.iter().fold(
        &grid[0],
        |b, p| if p.cv_accuracy > b.cv_accuracy { p } else { b },
    );
    Ok(Selection {
        gamma: best.gamma,
        c: best.c,
        grid,
    })
}

/// Model selection (unless `config.kernel` fixes the kernel) followed by a
/// final fit on all examples. Features are raw; the normalizer, if any, is
/// applied first and stored in the model.
pub fn train(
    x: &[Vec<f64>],
    y: &[f64],
    config: &TrainConfig,
    normalizer: Option<FeatureNormalizer>,
) -> Result<(SvmModel, TrainReport, Selection)> {
    config.validate()?;
    let prepared: Vec<Vec<f64>> = match &normalizer {
        Some(n) => x.iter().map(|v| n.apply(v)).collect::<Result<_>>()?,
        None => x.to_vec(),
    };
    let (kernel, c, selection) = match config.kernel {
        Some(k) => (
            k,
            config.c,
            Selection {
                gamma: match k {
                    Kernel::Rbf { gamma } => gamma,
                    _ => f64::NAN,
                },
                c: config.c,
                grid: Vec::new(),
            },
        ),
        None => {
            let s = select_hyperparameters(&prepared, y, config)?;
            (Kernel::Rbf { gamma: s.gamma }, s.c, s)
        }
    };
    let gram = Gram::kernel(&kernel, &prepared);
    let (mut model, report) = train_with_gram(&prepared, y, kernel, &gram, c, config)?;
    model.normalizer = normalizer;
    model.validate()?;
    Ok((model, report, selection))
}
