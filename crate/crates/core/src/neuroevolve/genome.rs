use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor_net::{LossKind, NetworkSpec, OptimizerKind};

/// Allowed widths for both hidden fully connected layers.
pub const WIDTH_ALLELES: [usize; 5] = [16, 32, 64, 128, 258];

const GENES: usize = 4;

/// The searchable hyperparameters of one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genome {
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub fc1_width: usize,
    pub fc2_width: usize,
}

impl Default for Genome {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            loss: LossKind::CategoricalCrossentropy,
            fc1_width: 64,
            fc2_width: 32,
        }
    }
}

fn allele_count(gene: usize) -> usize {
    match gene {
        0 => OptimizerKind::ALL.len(),
        1 => LossKind::ALL.len(),
        _ => WIDTH_ALLELES.len(),
    }
}

impl Genome {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut g = Self::default();
        for gene in 0..GENES {
            g.set_allele(gene, rng.gen_range(0..allele_count(gene)));
        }
        g
    }

    /// True when every gene holds a value from its allele set.
    pub fn is_valid(&self) -> bool {
        WIDTH_ALLELES.contains(&self.fc1_width) && WIDTH_ALLELES.contains(&self.fc2_width)
    }

    /// Index of each gene's value within its allele set.
    pub fn alleles(&self) -> [usize; GENES] {
        let width = |w| WIDTH_ALLELES.iter().position(|&a| a == w).unwrap_or(0);
        [
            self.optimizer.code() as usize,
            self.loss.code() as usize,
            width(self.fc1_width),
            width(self.fc2_width),
        ]
    }

    fn set_allele(&mut self, gene: usize, allele: usize) {
        match gene {
            0 => self.optimizer = OptimizerKind::ALL[allele],
            1 => self.loss = LossKind::ALL[allele],
            2 => self.fc1_width = WIDTH_ALLELES[allele],
            _ => self.fc2_width = WIDTH_ALLELES[allele],
        }
    }

    /// Each gene taken from either parent with equal probability.
    pub fn crossover<R: Rng + ?Sized>(&self, other: &Genome, rng: &mut R) -> Genome {
        let (a, b) = (self.alleles(), other.alleles());
        let mut child = *self;
        for gene in 0..GENES {
            child.set_allele(gene, if rng.gen_bool(0.5) { a[gene] } else { b[gene] });
        }
        child
    }

    /// Each gene replaced, with probability `p`, by a different allele drawn
    /// uniformly from the rest of its set.
    pub fn mutate<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> Genome {
        let current = self.alleles();
        let mut out = *self;
        for gene in 0..GENES {
            if rng.gen_bool(p) {
                let mut pick = rng.gen_range(0..allele_count(gene) - 1);
                if pick >= current[gene] {
                    pick += 1;
                }
                out.set_allele(gene, pick);
            }
        }
        out
    }

    /// `base` with this genome's optimizer, loss and widths.
    pub fn apply(&self, base: &NetworkSpec) -> NetworkSpec {
        NetworkSpec {
            fc1_width: self.fc1_width,
            fc2_width: self.fc2_width,
            loss: self.loss,
            optimizer: self.optimizer,
            ..*base
        }
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}-{}",
            self.optimizer,
            self.loss.name(),
            self.fc1_width,
            self.fc2_width
        )
    }
}
