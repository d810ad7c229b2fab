use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::index::sample;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream;

/// Holds ground-truth labels and reveals them one index at a time.
///
/// Reading the label of an index that has not been revealed fails and is
/// counted, so a run can assert that selection never peeked.
#[derive(Debug)]
pub struct LabelOracle {
    labels: Vec<usize>,
    revealed: Vec<bool>,
    unlabeled_reads: AtomicUsize,
    probe_reads: AtomicUsize,
}

impl LabelOracle {
    pub fn new(labels: Vec<usize>) -> Self {
        Self {
            revealed: vec![false; labels.len()],
            labels,
            unlabeled_reads: AtomicUsize::new(0),
            probe_reads: AtomicUsize::new(0),
        }
    }

    fn reveal(&mut self, i: usize) -> usize {
        self.revealed[i] = true;
        self.labels[i]
    }

    pub fn is_revealed(&self, i: usize) -> bool {
        self.revealed[i]
    }

    pub fn label(&self, i: usize) -> Result<usize> {
        if !self.revealed[i] {
            self.unlabeled_reads.fetch_add(1, Ordering::Relaxed);
            return Err(Error::LabelLeak(i));
        }
        Ok(self.labels[i])
    }

    /// Attempted reads of unrevealed labels outside probes.
    pub fn unlabeled_reads(&self) -> usize {
        self.unlabeled_reads.load(Ordering::Relaxed)
    }

    /// Labels of unrevealed indices observed through [`ProbeView`].
    pub fn probe_reads(&self) -> usize {
        self.probe_reads.load(Ordering::Relaxed)
    }
}

/// Read-only access that may observe unrevealed labels without adding
/// them to the labeled pool. Holding one borrows the pool immutably.
pub struct ProbeView<'a> {
    oracle: &'a LabelOracle,
}

impl ProbeView<'_> {
    pub fn peek(&self, i: usize) -> usize {
        if !self.oracle.revealed[i] {
            self.oracle.probe_reads.fetch_add(1, Ordering::Relaxed);
        }
        self.oracle.labels[i]
    }
}

/// Labeled / unlabeled partition of a training split.
#[derive(Debug)]
pub struct PoolState<'a> {
    data: &'a Dataset,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    oracle: LabelOracle,
}

impl<'a> PoolState<'a> {
    /// Labels `initial` indices drawn from the `initial` stream of `seed`.
    pub fn new(data: &'a Dataset, initial: usize, seed: u64) -> Result<Self> {
        if initial == 0 || initial > data.len() {
            return Err(Error::Budget {
                requested: initial,
                available: data.len(),
            });
        }
        let mut oracle = LabelOracle::new(data.labels().to_vec());
        let mut labeled = sample(&mut stream(seed, "initial", 0), data.len(), initial).into_vec();
        labeled.sort_unstable();
        for &i in &labeled {
            oracle.reveal(i);
        }
        let unlabeled = (0..data.len()).filter(|&i| !oracle.is_revealed(i)).collect();
        Ok(Self {
            data,
            labeled,
            unlabeled,
            oracle,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.data.feature_len()
    }

    /// Labeled indices in labeling order.
    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    /// Unlabeled indices, ascending.
    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn oracle(&self) -> &LabelOracle {
        &self.oracle
    }

    pub fn probe_view(&self) -> ProbeView<'_> {
        ProbeView { oracle: &self.oracle }
    }

    pub fn features(&self, indices: &[usize]) -> Vec<f64> {
        self.data.gather(indices)
    }

    /// Features and revealed labels of the labeled pool.
    pub fn labeled_data(&self) -> Result<(Vec<f64>, Vec<usize>)> {
        let y = self
            .labeled
            .iter()
            .map(|&i| self.oracle.label(i))
            .collect::<Result<Vec<_>>>()?;
        Ok((self.data.gather(&self.labeled), y))
    }

    /// Moves `picks` from U to L, revealing their labels.
    pub fn annotate(&mut self, picks: &[usize]) -> Result<()> {
        let mut sorted = picks.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != picks.len() {
            return Err(Error::Format("duplicate index in selection".into()));
        }
        for &i in &sorted {
            if self.unlabeled.binary_search(&i).is_err() {
                return Err(Error::Format(format!("selected index {i} is not in the unlabeled pool")));
            }
        }
        self.unlabeled.retain(|i| sorted.binary_search(i).is_err());
        for &i in picks {
            self.oracle.reveal(i);
            self.labeled.push(i);
        }
        Ok(())
    }

    /// Disjointness and coverage of the partition.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = vec![0u8; self.len()];
        for &i in self.labeled.iter().chain(&self.unlabeled) {
            seen[i] += 1;
        }
        if seen.iter().any(|&s| s != 1) {
            return Err(Error::Format("pool partition is not disjoint and complete".into()));
        }
        if self.labeled.iter().any(|&i| !self.oracle.is_revealed(i)) || self.unlabeled.iter().any(|&i| self.oracle.is_revealed(i)) {
            return Err(Error::Format("oracle state disagrees with the partition".into()));
        }
        Ok(())
    }
}
