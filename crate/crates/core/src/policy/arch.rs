//! Network shape and the flat parameter layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-step history features fed to the recurrent encoder: `d`, `v`.
pub const HIST_FEATURES: usize = 2;
/// Encoded context width: FV group (flag, r, r_dot), TL group (flag, one-hot
/// G/Y/R, timer), time of day (sin, cos).
pub const CTX_FEATURES: usize = 10;
/// Number of stacked recurrent layers.
pub const LSTM_LAYERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// Scalar acceleration.
    Deterministic,
    /// Gaussian mixture with this many components.
    Mixture { components: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyArchitecture {
    /// History length in steps (`n_tau`).
    pub history: usize,
    /// Hidden units per recurrent layer.
    pub hidden: usize,
    /// Hidden layer widths of the MLP head.
    pub mlp: Vec<usize>,
    pub head: HeadKind,
}

impl Default for PolicyArchitecture {
    fn default() -> Self {
        PolicyArchitecture {
            history: 11,
            hidden: 32,
            mlp: vec![16],
            head: HeadKind::Deterministic,
        }
    }
}

impl PolicyArchitecture {
    pub fn deterministic(history: usize, hidden: usize, mlp: Vec<usize>) -> Self {
        PolicyArchitecture {
            history,
            hidden,
            mlp,
            head: HeadKind::Deterministic,
        }
    }

    pub fn mixture(history: usize, hidden: usize, mlp: Vec<usize>, components: usize) -> Self {
        PolicyArchitecture {
            history,
            hidden,
            mlp,
            head: HeadKind::Mixture { components },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.history == 0 || self.hidden == 0 || self.mlp.contains(&0) {
            return Err(Error::config("history, hidden and MLP widths must be positive"));
        }
        if let HeadKind::Mixture { components } = self.head {
            if components == 0 {
                return Err(Error::config("a mixture head needs at least one component"));
            }
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        match self.head {
            HeadKind::Deterministic => 1,
            HeadKind::Mixture { components } => 3 * components,
        }
    }

    /// Raw (unscaled) input width of one sample.
    pub fn input_dim(&self) -> usize {
        self.history * HIST_FEATURES + CTX_FEATURES
    }

    pub fn layout(&self) -> Layout {
        let h = self.hidden;
        let mut b = LayoutBuilder::default();
        for l in 0..LSTM_LAYERS {
            let n_in = if l == 0 { HIST_FEATURES } else { h };
            b.push(format!("lstm{l}.w"), 4 * h, n_in + h);
            b.push(format!("lstm{l}.b"), 4 * h, 1);
        }
        let mut width = h + CTX_FEATURES;
        for (i, &m) in self.mlp.iter().enumerate() {
            b.push(format!("mlp{i}.w"), m, width);
            b.push(format!("mlp{i}.b"), m, 1);
            width = m;
        }
        b.push("head.w".into(), self.output_dim(), width);
        b.push("head.b".into(), self.output_dim(), 1);
        b.finish()
    }
}

/// One named block of the flat parameter vector, row-major `rows x cols`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Section {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Sections in fixed order: per recurrent layer (w, b), per MLP layer (w, b),
/// then the output layer (w, b).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub sections: Vec<Section>,
    pub total: usize,
}

impl Layout {
    pub fn lstm(&self, l: usize) -> (&Section, &Section) {
        (&self.sections[2 * l], &self.sections[2 * l + 1])
    }

    pub fn mlp(&self, i: usize) -> (&Section, &Section) {
        let k = 2 * LSTM_LAYERS + 2 * i;
        (&self.sections[k], &self.sections[k + 1])
    }

    pub fn head(&self) -> (&Section, &Section) {
        let n = self.sections.len();
        (&self.sections[n - 2], &self.sections[n - 1])
    }

    pub fn get(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

#[derive(Default)]
struct LayoutBuilder {
    sections: Vec<Section>,
    offset: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, rows: usize, cols: usize) {
        self.sections.push(Section {
            name,
            offset: self.offset,
            rows,
            cols,
        });
        self.offset += rows * cols;
    }

    fn finish(self) -> Layout {
        Layout {
            total: self.offset,
            sections: self.sections,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts() {
        let arch = PolicyArchitecture::default();
        let l = arch.layout();
        // lstm0: 128*34 + 128, lstm1: 128*64 + 128, mlp0: 16*42 + 16, head: 16 + 1
        assert_eq!(l.total, 128 * 34 + 128 + 128 * 64 + 128 + 16 * 42 + 16 + 16 + 1);
        assert_eq!(l.head().0.name, "head.w");
        assert_eq!(l.mlp(0).0.cols, 42);
        let last = l.sections.last().unwrap();
        assert_eq!(last.offset + last.len(), l.total);
    }

    #[test]
    fn mixture_output_width() {
        let arch = PolicyArchitecture::mixture(11, 8, vec![], 2);
        assert_eq!(arch.output_dim(), 6);
        assert_eq!(arch.layout().head().0.cols, 8 + CTX_FEATURES);
        assert!(PolicyArchitecture::mixture(11, 8, vec![], 0).validate().is_err());
    }
}
