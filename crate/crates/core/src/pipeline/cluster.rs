//! Grouping of time-ordered pixel hits into flashes.
//!
//! Two hits link when their pixels touch (8-neighbourhood, same pixel
//! included) and their TOAs differ by at most `link_ns`. Hits are visited in
//! time order; each joins every cluster it links to whose earliest hit lies
//! within `window_ns` before it, merging those clusters. A cluster therefore
//! never spans more than `window_ns` from its earliest member.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::event::{PixelEvent, Timebase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub link_ns: f64,
    pub window_ns: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            link_ns: 300.0,
            window_ns: 1000.0,
        }
    }
}

impl ClusterParams {
    /// `(link, window)` in whole TOA ticks.
    pub fn ticks(&self, tb: &Timebase) -> (u64, u64) {
        let t = tb.toa_tick_ns();
        ((self.link_ns / t + 1e-9).floor() as u64, (self.window_ns / t + 1e-9).floor() as u64)
    }
}

/// Clusters stored contiguously, ordered by their earliest member. Members of
/// a cluster are in time order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterSet {
    pub events: Vec<PixelEvent>,
    /// `offsets[k]..offsets[k + 1]` indexes cluster `k`.
    pub offsets: Vec<usize>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, k: usize) -> &[PixelEvent] {
        &self.events[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[PixelEvent]> + '_ {
        self.offsets.windows(2).map(move |w| &self.events[w[0]..w[1]])
    }

    fn append(&mut self, other: ClusterSet) {
        if other.is_empty() {
            return;
        }
        let base = self.events.len();
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        self.events.extend(other.events);
        self.offsets.extend(other.offsets[1..].iter().map(|o| o + base));
    }

    pub fn to_clusters(&self) -> Vec<Cluster> {
        self.iter().map(|m| Cluster { members: m.to_vec() }).collect()
    }
}

/// One flash's hits, in time order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub members: Vec<PixelEvent>,
}

impl Cluster {
    pub fn earliest_toa(&self) -> u64 {
        self.members.iter().map(|e| e.toa).min().unwrap_or(0)
    }

    /// `(x_min, y_min, x_max, y_max)`.
    pub fn bounding_box(&self) -> (u16, u16, u16, u16) {
        bounding_box(&self.members)
    }
}

pub fn bounding_box(members: &[PixelEvent]) -> (u16, u16, u16, u16) {
    members.iter().fold((u16::MAX, u16::MAX, 0, 0), |(x0, y0, x1, y1), e| {
        (x0.min(e.x), y0.min(e.y), x1.max(e.x), y1.max(e.y))
    })
}

const NONE: u32 = u32::MAX;

/// Reusable buffers for labelling one time-ordered block of hits.
#[derive(Default)]
struct Labeler {
    parent: Vec<u32>,
    earliest: Vec<u64>,
    prev_same_pixel: Vec<u32>,
    last_on_pixel: Vec<u32>,
    width: usize,
    candidates: Vec<u32>,
}

impl Labeler {
    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            let p = self.parent[i as usize];
            self.parent[i as usize] = self.parent[p as usize];
            i = p;
        }
        i
    }

    /// Cluster index of every hit, numbered by first appearance.
    fn label(&mut self, ev: &[PixelEvent], link: u64, window: u64) -> (Vec<u32>, usize) {
        let n = ev.len();
        assert!(n < NONE as usize, "block too large");
        let (w, h) = ev.iter().fold((0usize, 0usize), |(w, h), e| (w.max(e.x as usize + 3), h.max(e.y as usize + 3)));
        if self.last_on_pixel.len() < w * h || self.width != w {
            self.width = w;
            self.last_on_pixel = vec![NONE; w * h];
        }
        self.parent.clear();
        self.parent.resize(n, 0);
        self.earliest.clear();
        self.earliest.resize(n, 0);
        self.prev_same_pixel.clear();
        self.prev_same_pixel.resize(n, NONE);

        for i in 0..n {
            let e = ev[i];
            let t = e.toa;
            self.candidates.clear();
            let x = e.x as usize + 1;
            let y = e.y as usize + 1;
            for py in y - 1..=y + 1 {
                for px in x - 1..=x + 1 {
                    let mut j = self.last_on_pixel[py * self.width + px];
                    while j != NONE && t - ev[j as usize].toa <= link {
                        let r = self.find(j);
                        if t - self.earliest[r as usize] <= window && !self.candidates.contains(&r) {
                            self.candidates.push(r);
                        }
                        j = self.prev_same_pixel[j as usize];
                    }
                }
            }
            let me = i as u32;
            match self.candidates.iter().copied().min() {
                None => {
                    self.parent[i] = me;
                    self.earliest[i] = t;
                }
                Some(root) => {
                    let mut first = self.earliest[root as usize];
                    for k in 0..self.candidates.len() {
                        let c = self.candidates[k];
                        first = first.min(self.earliest[c as usize]);
                        self.parent[c as usize] = root;
                    }
                    self.earliest[root as usize] = first;
                    self.parent[i] = root;
                }
            }
            let slot = y * self.width + x;
            self.prev_same_pixel[i] = self.last_on_pixel[slot];
            self.last_on_pixel[slot] = me;
        }
        for e in ev {
            self.last_on_pixel[(e.y as usize + 1) * self.width + e.x as usize + 1] = NONE;
        }

        let mut id_of_root = vec![NONE; n];
        let mut labels = vec![0u32; n];
        let mut next = 0u32;
        for i in 0..n {
            let r = self.find(i as u32) as usize;
            if id_of_root[r] == NONE {
                id_of_root[r] = next;
                next += 1;
            }
            labels[i] = id_of_root[r];
        }
        (labels, next as usize)
    }
}

fn gather(ev: &[PixelEvent], labels: &[u32], n_clusters: usize) -> ClusterSet {
    let mut offsets = vec![0usize; n_clusters + 1];
    for &l in labels {
        offsets[l as usize + 1] += 1;
    }
    for k in 0..n_clusters {
        offsets[k + 1] += offsets[k];
    }
    let mut fill = offsets.clone();
    let mut events = vec![PixelEvent::new(0, 0, 0, 0); ev.len()];
    for (e, &l) in ev.iter().zip(labels) {
        events[fill[l as usize]] = *e;
        fill[l as usize] += 1;
    }
    ClusterSet { events, offsets }
}

fn check_sorted(events: &[PixelEvent]) {
    debug_assert!(events.windows(2).all(|w| w[0].toa <= w[1].toa), "hits must be time-ordered");
}

/// Cluster index of every hit of a time-ordered stream, numbered in order of
/// each cluster's earliest hit.
pub fn cluster_labels(events: &[PixelEvent], tb: &Timebase, params: &ClusterParams) -> Vec<u32> {
    check_sorted(events);
    let (link, window) = params.ticks(tb);
    Labeler::default().label(events, link, window).0
}

/// Single-pass clustering of a time-ordered stream.
pub fn cluster(events: &[PixelEvent], tb: &Timebase, params: &ClusterParams) -> ClusterSet {
    check_sorted(events);
    let (link, window) = params.ticks(tb);
    let (labels, n) = Labeler::default().label(events, link, window);
    gather(events, &labels, n)
}

/// Block boundaries (start indices, first is 0) about every `chunk_ticks`,
/// each moved forward to the next gap longer than `link` ticks. No link can
/// cross such a gap, so blocks cluster independently and exactly.
pub fn quiet_gap_boundaries(events: &[PixelEvent], link: u64, chunk_ticks: u64) -> Vec<usize> {
    let mut out = vec![0];
    if events.is_empty() {
        return out;
    }
    let mut target = events[0].toa.saturating_add(chunk_ticks);
    for i in 1..events.len() {
        if events[i].toa >= target && events[i].toa - events[i - 1].toa > link {
            out.push(i);
            target = events[i].toa.saturating_add(chunk_ticks);
        }
    }
    out
}

/// Clustering split into independent time blocks of roughly `chunk_ns`,
/// processed in parallel. Produces exactly the same set as [`cluster`].
pub fn cluster_chunked(events: &[PixelEvent], tb: &Timebase, params: &ClusterParams, chunk_ns: f64) -> ClusterSet {
    check_sorted(events);
    let (link, window) = params.ticks(tb);
    let chunk_ticks = (chunk_ns / tb.toa_tick_ns()).ceil().max(1.0) as u64;
    let mut bounds = quiet_gap_boundaries(events, link, chunk_ticks);
    bounds.push(events.len());
    let parts: Vec<ClusterSet> = bounds
        .par_windows(2)
        .map_init(Labeler::default, |lab, w| {
            let block = &events[w[0]..w[1]];
            let (labels, n) = lab.label(block, link, window);
            gather(block, &labels, n)
        })
        .collect();
    let mut out = ClusterSet {
        events: Vec::with_capacity(events.len()),
        offsets: vec![0],
    };
    for p in parts {
        out.append(p);
    }
    out
}
