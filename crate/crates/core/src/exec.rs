use serde::{Deserialize, Serialize};

/// `Strict` results are bit-identical for every thread count: work is split
/// into fixed subtrees whose partial results are merged in index order.
/// `Fast` splits more finely and may drift by rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    #[default]
    Strict,
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exec {
    pub threads: usize,
    pub mode: ExecMode,
}

impl Default for Exec {
    fn default() -> Self {
        Exec { threads: 1, mode: ExecMode::Strict }
    }
}

impl Exec {
    pub fn with_threads(threads: usize) -> Self {
        Exec { threads: threads.max(1), ..Self::default() }
    }

    /// Runs `f` on a pool of `self.threads` workers (inline when single
    /// threaded).
    pub(crate) fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        if self.threads <= 1 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(self.threads).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
}
