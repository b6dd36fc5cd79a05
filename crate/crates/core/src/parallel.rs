//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) the [`Parallelism::Rayon`] mode runs
//! on the global rayon pool. Without it every mode degrades to a plain
//! sequential loop. Output order always matches input order, so callers get
//! identical results regardless of the mode or thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    #[default]
    Rayon,
}

impl Parallelism {
    /// True when this mode will actually use more than one thread if available.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Rayon
    }
}

/// Map `f(index, item)` over `items`, preserving order.
pub fn map_indexed<T, R, F>(items: &[T], mode: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == Parallelism::Rayon {
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = mode;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Map `f(i)` over `0..len`, preserving order.
pub fn map_range<R, F>(len: usize, mode: Parallelism, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == Parallelism::Rayon {
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..len).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map_indexed(&items, Parallelism::Sequential, |i, x| x * x + i as u64);
        let par = map_indexed(&items, Parallelism::Rayon, |i, x| x * x + i as u64);
        assert_eq!(seq, par);
        assert_eq!(
            map_range(5, Parallelism::Rayon, |i| i * 2),
            vec![0, 2, 4, 6, 8]
        );
    }
}
