use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabel {
    pub node: usize,
    pub class: usize,
    pub confidence: f64,
}

/// Confident target predictions admitted as labels, sorted by node index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudoLabelSet {
    pub labels: Vec<PseudoLabel>,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn nodes(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.node).collect()
    }

    pub fn classes(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.class).collect()
    }
}

/// Keeps rows whose largest probability reaches `threshold`, at most
/// `floor(max_fraction · n_c)` per predicted class where `n_c` counts the rows
/// predicted as class `c`. Higher confidence wins; ties go to the lower index.
pub fn select_pseudo_labels(
    probs: &Matrix,
    threshold: f64,
    max_fraction: f64,
) -> Result<PseudoLabelSet> {
    let c = probs.ncols();
    let mut predicted = vec![0usize; c];
    let mut candidates = Vec::new();
    for (i, row) in probs.rows().into_iter().enumerate() {
        let s: f64 = row.sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::contract(format!("prediction row {i} sums to {s}")));
        }
        let (class, &confidence) =
            row.iter()
                .enumerate()
                .fold((0, &f64::NEG_INFINITY), |best, (j, p)| {
                    if *p > *best.1 {
                        (j, p)
                    } else {
                        best
                    }
                });
        predicted[class] += 1;
        if confidence >= threshold {
            candidates.push(PseudoLabel {
                node: i,
                class,
                confidence,
            });
        }
    }
    candidates.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.node.cmp(&b.node))
    });
    let caps: Vec<usize> = predicted
        .iter()
        .map(|&n| (max_fraction * n as f64 + 1e-9).floor() as usize)
        .collect();
    let mut taken = vec![0usize; c];
    let mut labels: Vec<PseudoLabel> = candidates
        .into_iter()
        .filter(|l| {
            let ok = taken[l.class] < caps[l.class];
            taken[l.class] += ok as usize;
            ok
        })
        .collect();
    labels.sort_by_key(|l| l.node);
    Ok(PseudoLabelSet { labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn threshold_filters() {
        let p = array![[0.95, 0.05], [0.6, 0.4], [0.05, 0.95], [0.02, 0.98]];
        let s = select_pseudo_labels(&p, 0.9, 1.0).unwrap();
        assert_eq!(s.nodes(), vec![0, 2, 3]);
        assert_eq!(s.classes(), vec![0, 1, 1]);
        let s = select_pseudo_labels(&p, 0.9, 0.5).unwrap();
        // class 0 predicted twice → cap 1; class 1 predicted twice → cap 1
        assert_eq!(s.nodes(), vec![0, 3]);
    }

    #[test]
    fn unit_threshold_needs_certainty() {
        let p = array![[0.999, 0.001], [0.5, 0.5]];
        assert!(select_pseudo_labels(&p, 1.0, 1.0).unwrap().is_empty());
    }

    #[test]
    fn ties_prefer_lower_index() {
        let p = array![[0.9, 0.1], [0.9, 0.1], [0.9, 0.1], [0.9, 0.1]];
        let s = select_pseudo_labels(&p, 0.9, 0.5).unwrap();
        assert_eq!(s.nodes(), vec![0, 1]);
    }

    #[test]
    fn unnormalised_rows_rejected() {
        assert!(select_pseudo_labels(&array![[0.9, 0.3]], 0.5, 1.0).is_err());
    }
}
