use super::targets::SampleWeights;
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::teacher::{ProbeSet, TeacherNet};

/// Per-probe probability of the true class for every row, with probes in
/// hidden-layer order: `out[p][i]`.
pub fn probe_confidences(teacher: &TeacherNet, probes: &ProbeSet, d: &Dataset) -> Result<Vec<(usize, f64, Vec<f64>)>> {
    if probes.is_empty() {
        return Err(Error::invalid("no probes"));
    }
    let labels = d.classes()?;
    let mut out = Vec::with_capacity(probes.len());
    for p in &probes.probes {
        let proba = p.predict_proba(teacher, d.features())?;
        if labels.iter().any(|&y| y >= proba.ncols()) {
            return Err(Error::invalid("label outside the probe's classes"));
        }
        let conf = labels.iter().enumerate().map(|(i, &y)| proba[[i, y]]).collect();
        out.push((p.layer, p.valid_accuracy, conf));
    }
    out.sort_by_key(|(layer, _, _)| *layer);
    Ok(out)
}

/// Averages the confidences of the probes whose validation accuracy reaches
/// `baseline + margin`, then rescales to mean 1. With no such probe every
/// weight is 1.
pub fn weights_from_confidences(conf: &[(usize, f64, Vec<f64>)], baseline: f64, margin: f64) -> Result<SampleWeights> {
    let Some(first) = conf.first() else {
        return Err(Error::invalid("no probes"));
    };
    let n = first.2.len();
    // summing in layer order keeps the result independent of probe order
    let mut selected: Vec<(usize, &Vec<f64>)> = conf
        .iter()
        .filter(|(_, acc, _)| *acc >= baseline + margin)
        .map(|(l, _, c)| (*l, c))
        .collect();
    selected.sort_by_key(|(l, _)| *l);
    if selected.is_empty() || n == 0 {
        return Ok(SampleWeights::ones(n));
    }
    let mut w = vec![0.0; n];
    for (_, c) in &selected {
        if c.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: c.len() });
        }
        for (wi, ci) in w.iter_mut().zip(c.iter()) {
            *wi += ci;
        }
    }
    let k = selected.len() as f64;
    w.iter_mut().for_each(|v| *v /= k);
    let mean = w.iter().sum::<f64>() / n as f64;
    if mean.is_nan() || mean <= 0.0 {
        return Ok(SampleWeights::ones(n));
    }
    w.iter_mut().for_each(|v| *v /= mean);
    SampleWeights::new(w)
}

/// ProfWeight sample weights for `train`: easy rows, on which the selected
/// probes put high probability on the true class, weigh more.
pub fn profweight(
    teacher: &TeacherNet,
    probes: &ProbeSet,
    train: &Dataset,
    baseline_student_accuracy: f64,
    margin: f64,
) -> Result<SampleWeights> {
    let conf = probe_confidences(teacher, probes, train)?;
    weights_from_confidences(&conf, baseline_student_accuracy, margin)
}
