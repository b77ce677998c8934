//! Index-ordered parallel map over scoped threads.

use crate::error::Result;

/// `(0..count).map(f)` split into contiguous chunks over `threads` workers.
/// Results come back in index order whatever the thread count.
pub fn map_indexed<T, F>(count: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if threads <= 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let chunk = count.div_ceil(threads);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let range = (t * chunk).min(count)..((t + 1) * chunk).min(count);
                s.spawn(move || range.map(f).collect::<Result<Vec<_>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(count);
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_threads() {
        let one = map_indexed(37, 1, |i| Ok(i * i)).unwrap();
        let four = map_indexed(37, 4, |i| Ok(i * i)).unwrap();
        assert_eq!(one, four);
        assert_eq!(map_indexed(0, 3, |i| Ok(i)).unwrap(), Vec::<usize>::new());
    }
}
