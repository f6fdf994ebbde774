//! Causal cache sizing and the per-stream tail-frame buffer.
//!
//! Frames are indexed in padded stream coordinates: the `k - 1` front pad
//! frames occupy indices `0..k-1` and input frame `i` sits at `k - 1 + i`.
//! Window `n` covers `[n*s, n*s + k - 1]`. Under canonical chunking (frame 0
//! alone, then chunks of `T_chunk`), chunk `m` ends at `k - 1 + m*T_chunk`.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::conv::TemporalPad;

fn check_cache_params(k: usize, s: usize, t_chunk: usize) -> Result<()> {
    if k == 0 || s == 0 || t_chunk == 0 {
        return Err(Error::param(format!(
            "kernel, stride and chunk size must be >= 1 (got k={k}, s={s}, T_chunk={t_chunk})"
        )));
    }
    Ok(())
}

/// Closed-form cache length after chunk `m`:
/// `k + m*T_chunk - s * floor(m*T_chunk / s + 1)`.
///
/// A negative value `-d` means no frame is carried and the next `d` incoming
/// frames fall between windows (only possible when `s > k`).
pub fn cache_len(k_t: usize, s_t: usize, t_chunk: usize, m: usize) -> Result<i64> {
    check_cache_params(k_t, s_t, t_chunk)?;
    let (k, s, mt) = (k_t as i64, s_t as i64, (m * t_chunk) as i64);
    Ok(k + mt - s * (mt / s + 1))
}

/// Frames actually held after chunk `m`: `max(0, cache_len)`.
pub fn cached_frames(k_t: usize, s_t: usize, t_chunk: usize, m: usize) -> Result<usize> {
    Ok(cache_len(k_t, s_t, t_chunk, m)?.max(0) as usize)
}

/// Cache length by sliding the window one step at a time until it first
/// reaches past the end of chunk `m`; the cache runs from that window's start
/// to the chunk end.
pub fn simulate_cache_len(k_t: usize, s_t: usize, t_chunk: usize, m: usize) -> Result<i64> {
    check_cache_params(k_t, s_t, t_chunk)?;
    let chunk_end = k_t - 1 + m * t_chunk;
    let mut n = 0usize;
    while n * s_t + k_t - 1 <= chunk_end {
        n += 1;
    }
    Ok(chunk_end as i64 - (n * s_t) as i64 + 1)
}

pub type Frame = Arc<[f32]>;

/// Sliding-window frame buffer for one causal temporal operator.
///
/// Holds the tail of the padded stream that later windows still need and
/// releases each window as soon as its last frame arrives. Works with any
/// chunk sizes because it tracks absolute frame indices.
#[derive(Debug, Clone)]
pub struct FrameWindow {
    kernel: usize,
    stride: usize,
    pad_mode: TemporalPad,
    frames: VecDeque<Frame>,
    /// Padded index of `frames[0]`.
    base: usize,
    /// Padded frames seen so far.
    received: usize,
    next_window: usize,
}

impl FrameWindow {
    pub fn new(kernel: usize, stride: usize, pad_mode: TemporalPad) -> Result<Self> {
        check_cache_params(kernel, stride, 1)?;
        Ok(FrameWindow {
            kernel,
            stride,
            pad_mode,
            frames: VecDeque::new(),
            base: 0,
            received: 0,
            next_window: 0,
        })
    }

    pub fn cached(&self) -> usize {
        self.frames.len()
    }

    pub fn cached_frames(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter()
    }

    pub fn windows_emitted(&self) -> usize {
        self.next_window
    }

    /// Appends input frames and returns every window that became complete.
    pub fn push(&mut self, input: Vec<Frame>) -> Vec<Vec<Frame>> {
        if input.is_empty() {
            return Vec::new();
        }
        if self.received == 0 {
            let pad: Frame = match self.pad_mode {
                TemporalPad::ReplicateFirst => input[0].clone(),
                TemporalPad::Zeros => vec![0.0; input[0].len()].into(),
            };
            for _ in 0..self.kernel - 1 {
                self.accept(pad.clone());
            }
        }
        for f in input {
            self.accept(f);
        }
        let mut ready = Vec::new();
        while self.next_window * self.stride + self.kernel <= self.received {
            let start = self.next_window * self.stride - self.base;
            ready.push(self.frames.range(start..start + self.kernel).cloned().collect());
            self.next_window += 1;
        }
        let keep_from = self.next_window * self.stride;
        while self.base < keep_from && !self.frames.is_empty() {
            self.frames.pop_front();
            self.base += 1;
        }
        ready
    }

    fn accept(&mut self, frame: Frame) {
        let index = self.received;
        self.received += 1;
        if index < self.next_window * self.stride {
            // between windows when the stride exceeds the kernel
            self.base = self.received;
            return;
        }
        if self.frames.is_empty() {
            self.base = index;
        }
        self.frames.push_back(frame);
    }
}

/// Streaming state of one causal convolution.
#[derive(Debug, Clone)]
pub struct CacheState {
    window: FrameWindow,
    chunk_index: usize,
    occupancy: Vec<usize>,
    finished: bool,
}

impl CacheState {
    pub fn new(kernel: usize, stride: usize, pad_mode: TemporalPad) -> Result<Self> {
        Ok(CacheState {
            window: FrameWindow::new(kernel, stride, pad_mode)?,
            chunk_index: 0,
            occupancy: Vec::new(),
            finished: false,
        })
    }

    /// Chunks consumed so far (`m` of the next chunk).
    pub fn chunk_index(&self) -> usize {
        self.chunk_index
    }

    pub fn cached_len(&self) -> usize {
        self.window.cached()
    }

    /// Cached frame count recorded after each chunk.
    pub fn occupancy_trace(&self) -> &[usize] {
        &self.occupancy
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Marks the stream complete; later chunks are rejected.
    pub fn finish(&mut self) {
        self.finished = true;
    }

    pub(crate) fn push(&mut self, frames: Vec<Frame>) -> Result<Vec<Vec<Frame>>> {
        if self.finished {
            return Err(Error::State("chunk fed after the stream was finished".into()));
        }
        if frames.is_empty() {
            return Err(Error::State("empty chunk".into()));
        }
        let ready = self.window.push(frames);
        self.chunk_index += 1;
        self.occupancy.push(self.window.cached());
        Ok(ready)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Frames at or before the end of chunk `m` that some not-yet-complete
    /// window still reads, counted by enumerating windows.
    fn needed_frames(k: usize, s: usize, t_chunk: usize, m: usize) -> usize {
        let chunk_end = k - 1 + m * t_chunk;
        let mut needed = std::collections::BTreeSet::new();
        for n in 0..=chunk_end + k {
            let (start, end) = (n * s, n * s + k - 1);
            if end > chunk_end {
                for f in start..=chunk_end.min(end) {
                    needed.insert(f);
                }
            }
        }
        needed.len()
    }

    #[test]
    fn stated_cases() {
        for m in 0..12 {
            assert_eq!(cache_len(3, 1, 4, m).unwrap(), 2);
            assert_eq!(cache_len(3, 2, 4, m).unwrap(), 1);
            assert_eq!(cache_len(4, 3, 4, m).unwrap(), (m % 3) as i64 + 1);
        }
        let seq: Vec<i64> = (0..4).map(|m| cache_len(4, 3, 4, m).unwrap()).collect();
        assert_eq!(seq, vec![1, 2, 3, 1]);
    }

    #[test]
    fn zero_parameters_rejected() {
        assert!(matches!(cache_len(0, 1, 4, 0), Err(Error::Parameter(_))));
        assert!(matches!(cache_len(3, 0, 4, 0), Err(Error::Parameter(_))));
        assert!(matches!(cache_len(3, 1, 0, 0), Err(Error::Parameter(_))));
        assert!(matches!(simulate_cache_len(3, 0, 4, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn closed_form_matches_simulation_on_grid() {
        for k in 1..=6 {
            for s in 1..=4 {
                for t in 1..=8 {
                    for m in 0..=20 {
                        let f = cache_len(k, s, t, m).unwrap();
                        assert_eq!(f, simulate_cache_len(k, s, t, m).unwrap(), "k={k} s={s} T={t} m={m}");
                        assert_eq!(f.max(0) as usize, needed_frames(k, s, t, m), "k={k} s={s} T={t} m={m}");
                    }
                }
            }
        }
    }

    #[test]
    fn periodic_when_stride_equals_kernel() {
        for k in 1..=5 {
            for j in 1..=3 {
                let seq: Vec<i64> = (0..12).map(|m| simulate_cache_len(k, k, k * j, m).unwrap()).collect();
                assert!(seq.windows(2).all(|w| w[0] == w[1]), "k={k} j={j}: {seq:?}");
                assert_eq!(seq[0], cache_len(k, k, k * j, 0).unwrap());
            }
        }
    }

    fn frames(n: usize, start: usize) -> Vec<Frame> {
        (start..start + n).map(|i| Arc::from(vec![i as f32])).collect()
    }

    #[test]
    fn occupancy_follows_formula_under_canonical_chunking() {
        for (k, s, t) in [(3, 1, 4), (3, 2, 4), (4, 3, 4), (5, 4, 7), (2, 2, 1), (1, 3, 2)] {
            let mut st = CacheState::new(k, s, TemporalPad::ReplicateFirst).unwrap();
            st.push(frames(1, 0)).unwrap();
            let mut next = 1;
            for _ in 0..8 {
                st.push(frames(t, next)).unwrap();
                next += t;
            }
            let expect: Vec<usize> = (0..9).map(|m| cached_frames(k, s, t, m).unwrap()).collect();
            assert_eq!(st.occupancy_trace(), expect.as_slice(), "k={k} s={s} T={t}");
        }
    }

    #[test]
    fn k3_s2_holds_only_last_frame() {
        let mut st = CacheState::new(3, 2, TemporalPad::ReplicateFirst).unwrap();
        st.push(frames(1, 0)).unwrap();
        for i in 0..5 {
            st.push(frames(4, 1 + 4 * i)).unwrap();
        }
        assert!(st.occupancy_trace().iter().all(|&c| c == 1));
    }

    #[test]
    fn finished_stream_rejects_chunks() {
        let mut st = CacheState::new(3, 1, TemporalPad::Zeros).unwrap();
        st.push(frames(2, 0)).unwrap();
        st.finish();
        assert!(matches!(st.push(frames(1, 2)), Err(Error::State(_))));
    }

    proptest! {
        #[test]
        fn windows_match_whole_stream(k in 1usize..6, s in 1usize..5, sizes in proptest::collection::vec(1usize..8, 1..8)) {
            let total: usize = sizes.iter().sum();
            let mut whole = FrameWindow::new(k, s, TemporalPad::ReplicateFirst).unwrap();
            let expect = whole.push(frames(total, 0));
            let mut chunked = FrameWindow::new(k, s, TemporalPad::ReplicateFirst).unwrap();
            let mut got = Vec::new();
            let mut next = 0;
            for n in sizes {
                got.extend(chunked.push(frames(n, next)));
                next += n;
                prop_assert!(chunked.cached() <= k);
            }
            let flat = |w: &Vec<Vec<Frame>>| -> Vec<Vec<f32>> { w.iter().map(|win| win.iter().map(|f| f[0]).collect()).collect() };
            prop_assert_eq!(flat(&got), flat(&expect));
            prop_assert_eq!(got.len(), (total - 1) / s + 1);
        }
    }
}
