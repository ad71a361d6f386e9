//! Data-parallel execution and seed derivation.
//!
//! Every random stream is keyed by the logical identity of the work item, never
//! by the thread that happens to run it, so results do not depend on the worker
//! count or on whether the `parallel` feature is enabled.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Parallelism {
    Sequential,
    /// Worker threads; 0 uses every available core.
    Threads(usize),
    #[default]
    Auto,
}

impl Parallelism {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            None => Parallelism::Auto,
            Some(1) => Parallelism::Sequential,
            Some(n) => Parallelism::Threads(n),
        }
    }

    pub fn is_sequential(self) -> bool {
        matches!(self, Parallelism::Sequential) || !cfg!(feature = "parallel")
    }
}

/// Maps `f` over `items`, returning results in input order.
pub fn par_map<T, U, F>(mode: Parallelism, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    if mode.is_sequential() || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    imp::par_map(mode, items, f)
}

#[cfg(feature = "parallel")]
mod imp {
    use super::Parallelism;
    use rayon::prelude::*;

    pub fn par_map<T, U, F>(mode: Parallelism, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        // Nested calls reuse the pool that is already running them.
        if rayon::current_thread_index().is_some() {
            return items.par_iter().map(f).collect();
        }
        let threads = match mode {
            Parallelism::Threads(n) => n,
            _ => 0,
        };
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(f).collect()),
            Err(e) => {
                log::warn!("thread pool unavailable ({e}); running sequentially");
                items.iter().map(f).collect()
            }
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    use super::Parallelism;

    pub fn par_map<T, U, F>(_: Parallelism, items: &[T], f: F) -> Vec<U>
    where
        F: Fn(&T) -> U,
    {
        items.iter().map(f).collect()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with integer coordinates.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut bytes = Vec::with_capacity(8 * (parts.len() + 1));
    bytes.extend_from_slice(&base.to_le_bytes());
    for p in parts {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    splitmix(fnv1a(&bytes))
}

/// Mixes a base seed with a label and integer coordinates.
pub fn derive_seed_labeled(base: u64, label: &str, parts: &[u64]) -> u64 {
    let mut all = vec![fnv1a(label.as_bytes())];
    all.extend_from_slice(parts);
    derive_seed(base, &all)
}
