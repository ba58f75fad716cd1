//! Multi-task extension of the 1-D CNN: one shared convolutional trunk with
//! two dense heads, trained jointly on the primary (current-term) and
//! secondary (prior-term) tasks with summed, equally weighted
//! cross-entropies.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Performance;
use crate::rng::substream;

use super::cnn::{
    mean_ce, Adam, CnnConfig, DenseHead, EpochLoss, FitHistory, HeadGrads, Tensor3, TrainConfig,
    Trunk, TrunkGrads, CLASS_LOW,
};
use super::LearnerError;

/// Which GPA label a task trains on. The guard in [`mtl_fit`] rejects a
/// secondary task carrying current-term labels — that would leak the
/// evaluation cohort's outcomes into training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Current,
    Prior,
}

/// One task's training data.
pub struct TaskData {
    pub x: Tensor3,
    /// Class indices per sample.
    pub y: Vec<usize>,
    pub label_kind: LabelKind,
}

/// Hard parameter sharing: the trunk is one storage location used by both
/// heads, so a gradient step from either task moves both tasks' features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MtlModel {
    pub trunk: Trunk,
    pub head_primary: DenseHead,
    pub head_secondary: DenseHead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Primary,
    Secondary,
}

impl MtlModel {
    pub fn init(cfg: CnnConfig, seed: u64) -> Result<Self, LearnerError> {
        let model = super::cnn::Cnn1dModel::init(cfg, seed)?;
        let mut rng = substream(seed, "mtl_head2", 0);
        let head_secondary = DenseHead::init(&cfg, &mut rng);
        Ok(MtlModel {
            trunk: model.trunk,
            head_primary: model.head,
            head_secondary,
        })
    }

    fn head(&self, task: Task) -> &DenseHead {
        match task {
            Task::Primary => &self.head_primary,
            Task::Secondary => &self.head_secondary,
        }
    }

    pub fn forward_batch(
        &self,
        task: Task,
        x: &Tensor3,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Vec<[f64; 2]>, LearnerError> {
        let cfg = &self.trunk.cfg;
        if x.features != cfg.in_features || x.days != cfg.days {
            return Err(LearnerError::Shape("input does not match model".into()));
        }
        Ok((0..x.n)
            .map(|i| {
                let cache = self.trunk.forward(x.sample(i), dropout_rng.as_deref_mut());
                self.head(task).forward(&cache.flat).probs
            })
            .collect())
    }

    pub fn predict_proba_low(&self, x: &Tensor3) -> Result<Vec<f64>, LearnerError> {
        Ok(self
            .forward_batch(Task::Primary, x, None)?
            .into_iter()
            .map(|p| p[CLASS_LOW])
            .collect())
    }

    pub fn predict(&self, x: &Tensor3) -> Result<Vec<Performance>, LearnerError> {
        Ok(self
            .predict_proba_low(x)?
            .into_iter()
            .map(|p| if p > 0.5 { Performance::Low } else { Performance::High })
            .collect())
    }

    pub fn task_loss(&self, task: Task, x: &Tensor3, y: &[usize]) -> Result<f64, LearnerError> {
        Ok(mean_ce(&self.forward_batch(task, x, None)?, y))
    }

    /// Accumulate one task's mean-loss gradients into the given trunk/head
    /// gradient buffers; returns the batch loss.
    fn accumulate_task(
        &self,
        task: Task,
        x: &Tensor3,
        y: &[usize],
        dropout_rng: &mut ChaCha8Rng,
        tg: &mut TrunkGrads,
        hg: &mut HeadGrads,
    ) -> f64 {
        let scale = 1.0 / x.n.max(1) as f64;
        let mut loss = 0.0;
        for i in 0..x.n {
            let sample = x.sample(i);
            let tcache = self.trunk.forward(sample, Some(dropout_rng));
            let hcache = self.head(task).forward(&tcache.flat);
            loss += -(hcache.probs[y[i]].max(1e-300)).ln() * scale;
            let mut dlogits = hcache.probs;
            dlogits[y[i]] -= 1.0;
            dlogits[0] *= scale;
            dlogits[1] *= scale;
            let dflat = self.head(task).backward(&tcache.flat, &hcache, dlogits, hg);
            self.trunk.backward(sample, &tcache, &dflat, tg);
        }
        loss
    }
}

fn resample_with_replacement(n_from: usize, n_to: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::Rng;
    (0..n_to).map(|_| rng.gen_range(0..n_from)).collect()
}

/// Joint training. The primary task is resampled with replacement up to the
/// secondary task's size; every optimization step draws one batch per task
/// and applies the summed per-task cross-entropy (equal weights) through
/// the shared trunk. Early stopping watches the primary validation loss.
pub fn mtl_fit(
    model: &mut MtlModel,
    primary: &TaskData,
    secondary: &TaskData,
    primary_val: (&Tensor3, &[usize]),
    cfg: &TrainConfig,
) -> Result<FitHistory, LearnerError> {
    if primary.label_kind != LabelKind::Current {
        return Err(LearnerError::Leakage(
            "primary task must train on current-term labels".into(),
        ));
    }
    if secondary.label_kind != LabelKind::Prior {
        return Err(LearnerError::Leakage(
            "secondary task must train on prior-term labels only".into(),
        ));
    }
    if primary.x.n == 0 || secondary.x.n == 0 {
        return Err(LearnerError::Shape("both tasks need training samples".into()));
    }

    let mut resample_rng = substream(cfg.seed, "mtl_resample", 0);
    let (px, py): (Tensor3, Vec<usize>) = if primary.x.n < secondary.x.n {
        let idx = resample_with_replacement(primary.x.n, secondary.x.n, &mut resample_rng);
        (
            primary.x.gather(&idx),
            idx.iter().map(|&i| primary.y[i]).collect(),
        )
    } else {
        (primary.x.gather(&(0..primary.x.n).collect::<Vec<_>>()), primary.y.clone())
    };

    let sizes = vec![
        model.trunk.conv_w.len(),
        model.trunk.conv_b.len(),
        model.head_primary.w1.len(),
        model.head_primary.b1.len(),
        model.head_primary.w2.len(),
        model.head_primary.b2.len(),
        model.head_secondary.w1.len(),
        model.head_secondary.b1.len(),
        model.head_secondary.w2.len(),
        model.head_secondary.b2.len(),
    ];
    let mut adam = Adam::new(cfg.learning_rate, &sizes);
    let mut shuffle_rng = substream(cfg.seed, "mtl_shuffle", 0);
    let mut dropout_rng = substream(cfg.seed, "mtl_dropout", 0);

    let snapshot = |m: &MtlModel| -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(&m.trunk.conv_w);
        out.extend(&m.trunk.conv_b);
        for h in [&m.head_primary, &m.head_secondary] {
            out.extend(&h.w1);
            out.extend(&h.b1);
            out.extend(&h.w2);
            out.extend(&h.b2);
        }
        out
    };
    let restore = |m: &mut MtlModel, flat: &[f64]| {
        let mut i = 0;
        let mut take = |dst: &mut Vec<f64>| {
            let len = dst.len();
            dst.copy_from_slice(&flat[i..i + len]);
            i += len;
        };
        take(&mut m.trunk.conv_w);
        take(&mut m.trunk.conv_b);
        take(&mut m.head_primary.w1);
        take(&mut m.head_primary.b1);
        take(&mut m.head_primary.w2);
        take(&mut m.head_primary.b2);
        take(&mut m.head_secondary.w1);
        take(&mut m.head_secondary.b1);
        take(&mut m.head_secondary.w2);
        take(&mut m.head_secondary.b2);
    };

    let n = px.n.min(secondary.x.n);
    let mut best = (f64::INFINITY, snapshot(model), 0usize);
    let mut since_improve = 0usize;
    let mut losses = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        let mut p_order: Vec<usize> = (0..n).collect();
        p_order.shuffle(&mut shuffle_rng);
        let mut s_order: Vec<usize> = (0..n).collect();
        s_order.shuffle(&mut shuffle_rng);

        let mut train_loss = 0.0;
        let mut seen = 0usize;
        let bs = cfg.batch_size.max(1);
        for (p_chunk, s_chunk) in p_order.chunks(bs).zip(s_order.chunks(bs)) {
            let bx_p = px.gather(p_chunk);
            let by_p: Vec<usize> = p_chunk.iter().map(|&i| py[i]).collect();
            let bx_s = secondary.x.gather(s_chunk);
            let by_s: Vec<usize> = s_chunk.iter().map(|&i| secondary.y[i]).collect();

            let mut tg = TrunkGrads::zeros(&model.trunk.cfg);
            let mut hg_p = HeadGrads::zeros(&model.trunk.cfg);
            let mut hg_s = HeadGrads::zeros(&model.trunk.cfg);
            let loss_p =
                model.accumulate_task(Task::Primary, &bx_p, &by_p, &mut dropout_rng, &mut tg, &mut hg_p);
            let loss_s =
                model.accumulate_task(Task::Secondary, &bx_s, &by_s, &mut dropout_rng, &mut tg, &mut hg_s);
            let loss = loss_p + loss_s;
            if !loss.is_finite() {
                return Err(LearnerError::NonFinite(format!("joint loss at epoch {epoch}")));
            }
            train_loss += loss * p_chunk.len() as f64;
            seen += p_chunk.len();

            let grads = [
                &tg.conv_w, &tg.conv_b, &hg_p.w1, &hg_p.b1, &hg_p.w2, &hg_p.b2, &hg_s.w1,
                &hg_s.b1, &hg_s.w2, &hg_s.b2,
            ];
            let mut params: Vec<&mut Vec<f64>> = vec![
                &mut model.trunk.conv_w,
                &mut model.trunk.conv_b,
                &mut model.head_primary.w1,
                &mut model.head_primary.b1,
                &mut model.head_primary.w2,
                &mut model.head_primary.b2,
                &mut model.head_secondary.w1,
                &mut model.head_secondary.b1,
                &mut model.head_secondary.w2,
                &mut model.head_secondary.b2,
            ];
            adam.step(&mut params, &grads);
        }

        let val_loss = model.task_loss(Task::Primary, primary_val.0, primary_val.1)?;
        losses.push(EpochLoss {
            epoch,
            train_loss: train_loss / seen.max(1) as f64,
            val_loss: Some(val_loss),
        });
        if val_loss < best.0 {
            best = (val_loss, snapshot(model), epoch);
            since_improve = 0;
        } else {
            since_improve += 1;
            if since_improve >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    restore(model, &best.1);
    Ok(FitHistory {
        losses,
        best_epoch: best.2,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy(n: usize, features: usize, seed: u64, shift: f64) -> (Tensor3, Vec<usize>) {
        let mut rng = substream(seed, "mtl_toy", 0);
        let mut x = Tensor3::zeros(n, 7, features);
        let mut y = vec![0usize; n];
        for i in 0..n {
            y[i] = i % 2;
            let mu = if y[i] == 1 { shift } else { -shift };
            for v in x.sample_mut(i).iter_mut() {
                *v = mu + rng.gen::<f64>() - 0.5;
            }
        }
        (x, y)
    }

    #[test]
    fn secondary_with_current_labels_is_rejected() {
        let (x, y) = toy(8, 3, 1, 1.0);
        let mut model = MtlModel::init(CnnConfig::new(3, 7), 1).unwrap();
        let primary = TaskData {
            x: x.gather(&(0..8).collect::<Vec<_>>()),
            y: y.clone(),
            label_kind: LabelKind::Current,
        };
        let bad_secondary = TaskData {
            x: x.gather(&(0..8).collect::<Vec<_>>()),
            y: y.clone(),
            label_kind: LabelKind::Current,
        };
        let cfg = TrainConfig {
            epochs: 1,
            seed: 1,
            ..Default::default()
        };
        let err = mtl_fit(&mut model, &primary, &bad_secondary, (&x, &y), &cfg).unwrap_err();
        assert!(matches!(err, LearnerError::Leakage(_)));
    }

    #[test]
    fn secondary_updates_move_primary_predictions() {
        // the trunk is shared storage: training only the secondary task must
        // change the primary head's outputs
        let (x, y) = toy(12, 3, 2, 1.2);
        let mut model = MtlModel::init(CnnConfig::new(3, 7), 2).unwrap();
        let before = model.predict_proba_low(&x).unwrap();

        let mut dropout_rng = substream(3, "d", 0);
        let mut tg = TrunkGrads::zeros(&model.trunk.cfg);
        let mut hg_s = HeadGrads::zeros(&model.trunk.cfg);
        model.accumulate_task(Task::Secondary, &x, &y, &mut dropout_rng, &mut tg, &mut hg_s);
        // apply a plain gradient step to trunk + secondary head only
        for (p, g) in model.trunk.conv_w.iter_mut().zip(&tg.conv_w) {
            *p -= 0.5 * g;
        }
        for (p, g) in model.trunk.conv_b.iter_mut().zip(&tg.conv_b) {
            *p -= 0.5 * g;
        }
        let after = model.predict_proba_low(&x).unwrap();
        assert_ne!(before, after);
    }

    #[test]
    fn primary_resampled_to_secondary_size_and_fit_runs() {
        let (px, py) = toy(6, 3, 4, 1.5);
        let (sx, sy) = toy(18, 3, 5, 1.5);
        let (vx, vy) = toy(6, 3, 6, 1.5);
        let mut model = MtlModel::init(CnnConfig::new(3, 7), 4).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 1e-3,
            seed: 4,
            ..Default::default()
        };
        let history = mtl_fit(
            &mut model,
            &TaskData {
                x: px,
                y: py,
                label_kind: LabelKind::Current,
            },
            &TaskData {
                x: sx,
                y: sy,
                label_kind: LabelKind::Prior,
            },
            (&vx, &vy),
            &cfg,
        )
        .unwrap();
        assert_eq!(history.losses.len(), 3);
    }
}
