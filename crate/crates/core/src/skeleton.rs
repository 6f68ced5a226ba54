//! Skeleton extraction and skeleton algebra.
//!
//! Components are thinned with Zhang-Suen, classified into endpoints, path
//! points and junctions by their 8-neighbour count, and then manipulated as
//! whole skeletons: long side branches are detached, short fragments pruned
//! and nearby endpoints joined with straight digital segments.
//!
//! Every length in this module is a geodesic step count along 8-connected
//! skeleton pixels.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::raster::{BinaryMask, Component, Pixel, NEIGHBORS8};

/// Thresholds driving branch splitting, fragment pruning and joining.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneParams {
    /// Side branches longer than this fraction of the main axis are detached.
    pub branch_ratio: f64,
    /// Fragments shorter than this fraction of the mean skeleton length go.
    pub fragment_ratio: f64,
    /// Absolute lower bound of the fragment threshold, in pixels.
    pub fragment_floor: f64,
    /// Join radius as a fraction of the skeleton's own length.
    pub join_ratio: f64,
}

impl Default for PruneParams {
    fn default() -> Self {
        Self {
            branch_ratio: 1.0 / 3.0,
            fragment_ratio: 1.0 / 7.0,
            fragment_floor: 15.0,
            join_ratio: 1.0 / 10.0,
        }
    }
}

impl PruneParams {
    pub fn validate(&self) -> crate::Result<()> {
        for (name, v) in [
            ("branch_ratio", self.branch_ratio),
            ("fragment_ratio", self.fragment_ratio),
            ("fragment_floor", self.fragment_floor),
            ("join_ratio", self.join_ratio),
        ] {
            if !(v > 0.0) {
                return Err(crate::Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Role of a skeleton pixel, from its number of neighbours in the skeleton.
///
/// Neighbours are counted with mixed adjacency: all 4-neighbours, plus
/// diagonal neighbours not already reachable through a shared 4-neighbour.
/// This keeps the corner of an L a path point and gives a T exactly one
/// junction pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointClass {
    /// One neighbour, or none for an isolated pixel.
    Endpoint,
    Path,
    Junction,
}

impl PointClass {
    pub fn from_degree(degree: usize) -> Self {
        match degree {
            0 | 1 => PointClass::Endpoint,
            2 => PointClass::Path,
            _ => PointClass::Junction,
        }
    }
}

/// A thinned, 8-connected pixel set with its derived graph structure.
#[derive(Debug, Clone)]
pub struct SkeletonGraph {
    pixels: Vec<Pixel>,
    index: HashMap<Pixel, usize>,
    adjacency: Vec<Vec<usize>>,
    classes: Vec<PointClass>,
    branches: Vec<Vec<Pixel>>,
    main_axis: Vec<Pixel>,
}

impl PartialEq for SkeletonGraph {
    fn eq(&self, other: &Self) -> bool {
        self.pixels == other.pixels
    }
}

impl Eq for SkeletonGraph {}

impl SkeletonGraph {
    /// Builds the graph over a pixel set. Duplicates are ignored.
    ///
    /// # Panics
    /// If `pixels` is empty.
    pub fn from_pixels(pixels: impl IntoIterator<Item = Pixel>) -> Self {
        let set: BTreeSet<Pixel> = pixels.into_iter().collect();
        assert!(!set.is_empty(), "a skeleton needs at least one pixel");
        let pixels: Vec<Pixel> = set.into_iter().collect();
        let index: HashMap<Pixel, usize> = pixels.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let adjacency: Vec<Vec<usize>> = pixels
            .iter()
            .map(|&(r, c)| {
                let mut adj: Vec<usize> = NEIGHBORS8
                    .iter()
                    .filter_map(|&(dr, dc)| {
                        let nr = r.checked_add_signed(dr)?;
                        let nc = c.checked_add_signed(dc)?;
                        // A diagonal step is redundant when the two pixels
                        // also meet through a shared 4-neighbour.
                        if dr != 0 && dc != 0 && (index.contains_key(&(r, nc)) || index.contains_key(&(nr, c))) {
                            return None;
                        }
                        index.get(&(nr, nc)).copied()
                    })
                    .collect();
                adj.sort_unstable();
                adj
            })
            .collect();
        let classes = adjacency.iter().map(|a| PointClass::from_degree(a.len())).collect();
        let mut sk = SkeletonGraph {
            pixels,
            index,
            adjacency,
            classes,
            branches: Vec::new(),
            main_axis: Vec::new(),
        };
        sk.branches = sk.trace_branches();
        sk.main_axis = sk.compute_main_axis();
        sk
    }

    /// Pixels in row-major order.
    pub fn pixels(&self) -> &[Pixel] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn contains(&self, p: Pixel) -> bool {
        self.index.contains_key(&p)
    }

    /// First pixel in row-major order; used for deterministic ordering.
    pub fn start(&self) -> Pixel {
        self.pixels[0]
    }

    pub fn class_of(&self, p: Pixel) -> Option<PointClass> {
        self.index.get(&p).map(|&i| self.classes[i])
    }

    pub fn degree(&self, p: Pixel) -> Option<usize> {
        self.index.get(&p).map(|&i| self.adjacency[i].len())
    }

    pub fn endpoints(&self) -> Vec<Pixel> {
        self.of_class(PointClass::Endpoint)
    }

    pub fn junctions(&self) -> Vec<Pixel> {
        self.of_class(PointClass::Junction)
    }

    fn of_class(&self, class: PointClass) -> Vec<Pixel> {
        self.pixels
            .iter()
            .zip(&self.classes)
            .filter(|(_, &c)| c == class)
            .map(|(&p, _)| p)
            .collect()
    }

    /// Pixel paths between node pixels (endpoints and junctions), each
    /// including its terminal nodes. Node-free cycles appear as one branch.
    pub fn branches(&self) -> &[Vec<Pixel>] {
        &self.branches
    }

    /// Geodesic path between the two farthest-apart endpoints.
    pub fn main_axis(&self) -> &[Pixel] {
        &self.main_axis
    }

    /// Step count of the main axis.
    pub fn length(&self) -> usize {
        self.main_axis.len().saturating_sub(1)
    }

    pub fn bounding_box(&self) -> (usize, usize, usize, usize) {
        crate::raster::bounds_of(self.pixels.iter().copied()).expect("non-empty")
    }

    pub fn to_mask(&self, width: usize, height: usize) -> BinaryMask {
        let mut m = BinaryMask::new(width, height);
        for &(r, c) in &self.pixels {
            if r < height && c < width {
                m.set(r, c, true);
            }
        }
        m
    }

    fn is_node(&self, i: usize) -> bool {
        self.classes[i] != PointClass::Path
    }

    fn trace_branches(&self) -> Vec<Vec<Pixel>> {
        let mut branches = Vec::new();
        let mut used_edges: HashSet<(usize, usize)> = HashSet::new();
        let edge = |a: usize, b: usize| (a.min(b), a.max(b));
        let mut on_branch = vec![false; self.pixels.len()];
        for start in 0..self.pixels.len() {
            if !self.is_node(start) {
                continue;
            }
            on_branch[start] = true;
            for &first in &self.adjacency[start] {
                if used_edges.contains(&edge(start, first)) {
                    continue;
                }
                used_edges.insert(edge(start, first));
                let mut path = vec![self.pixels[start]];
                let (mut prev, mut cur) = (start, first);
                loop {
                    path.push(self.pixels[cur]);
                    on_branch[cur] = true;
                    if self.is_node(cur) {
                        used_edges.insert(edge(prev, cur));
                        break;
                    }
                    let next = self.adjacency[cur]
                        .iter()
                        .copied()
                        .find(|&n| n != prev)
                        .expect("path pixels have two neighbours");
                    used_edges.insert(edge(cur, next));
                    prev = cur;
                    cur = next;
                    if cur == start {
                        path.push(self.pixels[cur]);
                        break;
                    }
                }
                branches.push(path);
            }
        }
        // Node-free cycles.
        for start in 0..self.pixels.len() {
            if on_branch[start] {
                continue;
            }
            let mut path = vec![self.pixels[start]];
            on_branch[start] = true;
            let (mut prev, mut cur) = (start, self.adjacency[start][0]);
            while cur != start {
                path.push(self.pixels[cur]);
                on_branch[cur] = true;
                let next = self.adjacency[cur].iter().copied().find(|&n| n != prev).unwrap();
                prev = cur;
                cur = next;
            }
            path.push(self.pixels[start]);
            branches.push(path);
        }
        branches
    }

    /// BFS from `source`; returns distances and parents (`usize::MAX` when
    /// unreachable). Neighbours are visited in index order, so the recovered
    /// paths are deterministic.
    fn bfs(&self, source: usize) -> (Vec<usize>, Vec<usize>) {
        let n = self.pixels.len();
        let mut dist = vec![usize::MAX; n];
        let mut parent = vec![usize::MAX; n];
        let mut queue = VecDeque::from([source]);
        dist[source] = 0;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        (dist, parent)
    }

    fn path_to(&self, parent: &[usize], source: usize, target: usize) -> Vec<Pixel> {
        let mut path = vec![self.pixels[target]];
        let mut cur = target;
        while cur != source {
            cur = parent[cur];
            path.push(self.pixels[cur]);
        }
        path.reverse();
        path
    }

    fn compute_main_axis(&self) -> Vec<Pixel> {
        let ends: Vec<usize> = (0..self.pixels.len())
            .filter(|&i| self.classes[i] == PointClass::Endpoint)
            .collect();
        if self.pixels.len() == 1 {
            return vec![self.pixels[0]];
        }
        if ends.len() >= 2 {
            // (euclidean^2, geodesic, a, b); ends are in row-major order so the
            // first pair found wins remaining ties.
            let mut best: Option<(usize, usize, usize, usize)> = None;
            let mut bfs_cache: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(ends.len());
            for (ia, &a) in ends.iter().enumerate() {
                bfs_cache.push(self.bfs(a));
                let dist = &bfs_cache[ia].0;
                for &b in &ends[ia + 1..] {
                    if dist[b] == usize::MAX {
                        continue;
                    }
                    let (pa, pb) = (self.pixels[a], self.pixels[b]);
                    let e2 = pa.0.abs_diff(pb.0).pow(2) + pa.1.abs_diff(pb.1).pow(2);
                    let key = (e2, dist[b]);
                    if best.is_none_or(|(be, bg, _, _)| key > (be, bg)) {
                        best = Some((e2, dist[b], a, b));
                    }
                }
            }
            if let Some((_, _, a, b)) = best {
                let ia = ends.iter().position(|&e| e == a).unwrap();
                return self.path_to(&bfs_cache[ia].1, a, b);
            }
        }
        if let Some(&a) = ends.first() {
            // Farthest reachable pixel from the single usable endpoint.
            let (dist, parent) = self.bfs(a);
            let far = (0..dist.len())
                .filter(|&i| dist[i] != usize::MAX)
                .max_by(|&x, &y| dist[x].cmp(&dist[y]).then(y.cmp(&x)))
                .unwrap();
            return self.path_to(&parent, a, far);
        }
        // No endpoints: walk the cycle from the first pixel.
        let mut visited = vec![false; self.pixels.len()];
        let mut path = vec![self.pixels[0]];
        visited[0] = true;
        let mut cur = 0;
        while let Some(&next) = self.adjacency[cur].iter().find(|&&n| !visited[n]) {
            visited[next] = true;
            path.push(self.pixels[next]);
            cur = next;
        }
        path
    }
}

/// Partition of skeleton pixels by class.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Classification {
    pub endpoints: Vec<Pixel>,
    pub path_points: Vec<Pixel>,
    pub junctions: Vec<Pixel>,
}

/// Classifies every skeleton pixel by its 3x3 neighbour count.
pub fn classify_points(sk: &SkeletonGraph) -> Classification {
    let mut out = Classification::default();
    for (&p, &class) in sk.pixels.iter().zip(&sk.classes) {
        match class {
            PointClass::Endpoint => out.endpoints.push(p),
            PointClass::Path => out.path_points.push(p),
            PointClass::Junction => out.junctions.push(p),
        }
    }
    out
}

/// Main axis of a skeleton (see [`SkeletonGraph::main_axis`]).
pub fn main_axis(sk: &SkeletonGraph) -> Vec<Pixel> {
    sk.main_axis.clone()
}

/// Zhang-Suen thinning followed by removal of staircase corners and any
/// remaining 2x2 blocks, so that the result is 8-minimal.
pub fn zhang_suen(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut img = mask.clone();
    let mut to_clear = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            to_clear.clear();
            for r in 0..h {
                for c in 0..w {
                    if !img.get(r, c) {
                        continue;
                    }
                    let nb = ring(&img, r, c);
                    let b = nb.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) || transitions(&nb) != 1 {
                        continue;
                    }
                    // nb: [P2, P3, P4, P5, P6, P7, P8, P9] = N, NE, E, SE, S, SW, W, NW
                    let (p2, p4, p6, p8) = (nb[0], nb[2], nb[4], nb[6]);
                    let ok = if step == 0 {
                        !(p2 && p4 && p6) && !(p4 && p6 && p8)
                    } else {
                        !(p2 && p4 && p8) && !(p2 && p6 && p8)
                    };
                    if ok {
                        to_clear.push((r, c));
                    }
                }
            }
            for &(r, c) in &to_clear {
                img.set(r, c, false);
            }
            changed |= !to_clear.is_empty();
        }
        if !changed {
            break;
        }
    }
    remove_redundant(&mut img);
    img
}

#[inline]
fn ring(img: &BinaryMask, r: usize, c: usize) -> [bool; 8] {
    let mut out = [false; 8];
    for (k, &(dr, dc)) in NEIGHBORS8.iter().enumerate() {
        out[k] = img.get_signed(r as isize + dr, c as isize + dc);
    }
    out
}

/// Number of background-to-foreground transitions around the ring.
#[inline]
fn transitions(nb: &[bool; 8]) -> usize {
    (0..8).filter(|&k| !nb[k] && nb[(k + 1) % 8]).count()
}

/// Number of 8-connected groups formed by the foreground ring pixels.
fn ring_groups(nb: &[bool; 8]) -> usize {
    // Ring cells adjacent to each other: consecutive cells always, and two
    // edge cells (even indices) two apart share a corner.
    let mut label = [usize::MAX; 8];
    let mut groups = 0;
    for s in 0..8 {
        if !nb[s] || label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        label[s] = groups;
        while let Some(k) = stack.pop() {
            let mut near = vec![(k + 1) % 8, (k + 7) % 8];
            if k % 2 == 0 {
                near.push((k + 2) % 8);
                near.push((k + 6) % 8);
            }
            for j in near {
                if nb[j] && label[j] == usize::MAX {
                    label[j] = groups;
                    stack.push(j);
                }
            }
        }
        groups += 1;
    }
    groups
}

fn remove_redundant(img: &mut BinaryMask) {
    let (w, h) = (img.width(), img.height());
    loop {
        let mut changed = false;
        for r in 0..h {
            for c in 0..w {
                if !img.get(r, c) {
                    continue;
                }
                let nb = ring(img, r, c);
                if nb.iter().filter(|&&v| v).count() < 2 || ring_groups(&nb) != 1 {
                    continue;
                }
                let (n, ne, e, se, s, sw, wv, nw) = (nb[0], nb[1], nb[2], nb[3], nb[4], nb[5], nb[6], nb[7]);
                let staircase = !(n && s)
                    && !(e && wv)
                    && ((n && e && !ne) || (e && s && !se) || (s && wv && !sw) || (wv && n && !nw));
                let in_block = (n && e && ne) || (e && s && se) || (s && wv && sw) || (wv && n && nw);
                if staircase || in_block {
                    img.set(r, c, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Thins a component to a one-pixel-wide skeleton.
///
/// A component that thinning would erase completely (a 2x2 block) keeps its
/// first pixel so component count is preserved.
pub fn thin(comp: &Component) -> SkeletonGraph {
    assert!(!comp.pixels.is_empty(), "cannot thin an empty component");
    // One pixel of padding so the border is background.
    let (r0, c0) = (comp.min_row, comp.min_col);
    let w = comp.max_col - c0 + 3;
    let h = comp.max_row - r0 + 3;
    let mut local = BinaryMask::new(w, h);
    for &(r, c) in &comp.pixels {
        local.set(r - r0 + 1, c - c0 + 1, true);
    }
    let thinned = zhang_suen(&local);
    let mut pixels: Vec<Pixel> = thinned
        .pixels()
        .into_iter()
        .map(|(r, c)| (r + r0 - 1, c + c0 - 1))
        .collect();
    if pixels.is_empty() {
        pixels.push(comp.pixels[0]);
    }
    SkeletonGraph::from_pixels(pixels)
}

/// Connected pieces of `pixels` under 8-adjacency, in row-major order of
/// their first pixel.
fn pieces(pixels: &BTreeSet<Pixel>) -> Vec<Vec<Pixel>> {
    let mut seen: HashSet<Pixel> = HashSet::new();
    let mut out = Vec::new();
    for &p in pixels {
        if !seen.insert(p) {
            continue;
        }
        let mut piece = vec![p];
        let mut queue = VecDeque::from([p]);
        while let Some((r, c)) = queue.pop_front() {
            for (dr, dc) in NEIGHBORS8 {
                let (Some(nr), Some(nc)) = (r.checked_add_signed(dr), c.checked_add_signed(dc)) else {
                    continue;
                };
                if pixels.contains(&(nr, nc)) && seen.insert((nr, nc)) {
                    piece.push((nr, nc));
                    queue.push_back((nr, nc));
                }
            }
        }
        piece.sort_unstable();
        out.push(piece);
    }
    out
}

/// A side structure hanging off the main axis.
#[derive(Debug, Clone)]
pub struct SideBranch {
    pub pixels: Vec<Pixel>,
    /// Largest geodesic distance from the main axis into the branch.
    pub length: usize,
    /// Main-axis pixels the branch touches.
    pub attachments: Vec<Pixel>,
}

/// Everything off the main axis, grouped into connected side branches.
pub fn side_branches(sk: &SkeletonGraph) -> Vec<SideBranch> {
    let axis: HashSet<Pixel> = sk.main_axis.iter().copied().collect();
    let rest: BTreeSet<Pixel> = sk.pixels.iter().copied().filter(|p| !axis.contains(p)).collect();
    pieces(&rest)
        .into_iter()
        .map(|piece| {
            let members: HashSet<Pixel> = piece.iter().copied().collect();
            let mut dist: HashMap<Pixel, usize> = HashMap::new();
            let mut queue = VecDeque::new();
            let mut attachments = BTreeSet::new();
            for &p in &piece {
                let i = sk.index[&p];
                let touches: Vec<Pixel> = sk.adjacency[i]
                    .iter()
                    .map(|&j| sk.pixels[j])
                    .filter(|q| axis.contains(q))
                    .collect();
                if !touches.is_empty() {
                    attachments.extend(touches);
                    dist.insert(p, 1);
                    queue.push_back(p);
                }
            }
            while let Some(p) = queue.pop_front() {
                let d = dist[&p];
                for &j in &sk.adjacency[sk.index[&p]] {
                    let q = sk.pixels[j];
                    if members.contains(&q) && !dist.contains_key(&q) {
                        dist.insert(q, d + 1);
                        queue.push_back(q);
                    }
                }
            }
            let length = dist.values().copied().max().unwrap_or(0);
            SideBranch {
                pixels: piece,
                length,
                attachments: attachments.into_iter().collect(),
            }
        })
        .collect()
}

/// Detaches every side branch longer than `branch_ratio` times the main-axis
/// length. The junction stays with the main skeleton; each detached branch
/// becomes a skeleton of its own and is split again recursively. Short
/// branches stay attached.
pub fn split_long_branches(sk: &SkeletonGraph, p: &PruneParams) -> Vec<SkeletonGraph> {
    let limit = p.branch_ratio * sk.length() as f64;
    let (long, short): (Vec<SideBranch>, Vec<SideBranch>) =
        side_branches(sk).into_iter().partition(|b| b.length as f64 > limit);
    if long.is_empty() {
        return vec![sk.clone()];
    }
    let main = SkeletonGraph::from_pixels(
        sk.main_axis
            .iter()
            .copied()
            .chain(short.into_iter().flat_map(|b| b.pixels)),
    );
    let mut out = vec![main];
    for b in long {
        out.extend(split_long_branches(&SkeletonGraph::from_pixels(b.pixels), p));
    }
    out.sort_by_key(SkeletonGraph::start);
    out
}

/// Fragment threshold `max(fragment_ratio * mean length, fragment_floor)`.
pub fn fragment_threshold(sks: &[SkeletonGraph], p: &PruneParams) -> f64 {
    if sks.is_empty() {
        return p.fragment_floor;
    }
    let mean = sks.iter().map(|s| s.length() as f64).sum::<f64>() / sks.len() as f64;
    (p.fragment_ratio * mean).max(p.fragment_floor)
}

/// Drops skeletons shorter than [`fragment_threshold`].
pub fn prune_fragments(sks: Vec<SkeletonGraph>, p: &PruneParams) -> Vec<SkeletonGraph> {
    let t = fragment_threshold(&sks, p);
    sks.into_iter().filter(|s| s.length() as f64 >= t).collect()
}

/// Straight 8-connected digital segment between two pixels, inclusive.
/// The pixel set does not depend on argument order.
pub fn digital_line(a: Pixel, b: Pixel) -> Vec<Pixel> {
    let (from, to) = if a <= b { (a, b) } else { (b, a) };
    let (r0, c0) = (from.0 as isize, from.1 as isize);
    let (r1, c1) = (to.0 as isize, to.1 as isize);
    let (dr, dc) = ((r1 - r0).abs(), -(c1 - c0).abs());
    let (sr, sc) = (if r0 < r1 { 1 } else { -1 }, if c0 < c1 { 1 } else { -1 });
    let mut err = dr + dc;
    let (mut r, mut c) = (r0, c0);
    let mut out = vec![(r as usize, c as usize)];
    while (r, c) != (r1, c1) {
        let e2 = 2 * err;
        if e2 >= dc {
            err += dc;
            r += sr;
        }
        if e2 <= dr {
            err += dr;
            c += sc;
        }
        out.push((r as usize, c as usize));
    }
    out
}

fn euclid(a: Pixel, b: Pixel) -> f64 {
    let dr = a.0 as f64 - b.0 as f64;
    let dc = a.1 as f64 - b.1 as f64;
    (dr * dr + dc * dc).sqrt()
}

/// Joins two skeletons through a straight segment between `a_end` and `b_end`.
pub fn merge_skeletons(a: &SkeletonGraph, a_end: Pixel, b: &SkeletonGraph, b_end: Pixel) -> SkeletonGraph {
    SkeletonGraph::from_pixels(
        a.pixels
            .iter()
            .chain(&b.pixels)
            .copied()
            .chain(digital_line(a_end, b_end)),
    )
}

/// A pool skeleton whose endpoint lies within the join radius of one of the
/// base skeleton's endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinCandidate {
    pub endpoint: Pixel,
    pub pool_index: usize,
    pub pool_endpoint: Pixel,
    pub distance: f64,
}

/// For each endpoint of `sk` (row-major order), the pool skeletons with an
/// endpoint within `join_ratio * sk.length()`, nearest first. A pool skeleton
/// appears at most once per endpoint, through its nearest endpoint.
pub fn join_candidates(
    sk: &SkeletonGraph,
    pool: &[SkeletonGraph],
    p: &PruneParams,
) -> Vec<(Pixel, Vec<JoinCandidate>)> {
    let radius = p.join_ratio * sk.length() as f64;
    let pool_ends: Vec<Vec<Pixel>> = pool.iter().map(SkeletonGraph::endpoints).collect();
    sk.endpoints()
        .into_iter()
        .map(|e| {
            let mut cands: Vec<JoinCandidate> = pool_ends
                .iter()
                .enumerate()
                .filter_map(|(i, ends)| {
                    ends.iter()
                        .map(|&q| (euclid(e, q), q))
                        .filter(|(d, _)| *d <= radius)
                        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
                        .map(|(d, q)| JoinCandidate {
                            endpoint: e,
                            pool_index: i,
                            pool_endpoint: q,
                            distance: d,
                        })
                })
                .collect();
            cands.sort_by(|x, y| x.distance.total_cmp(&y.distance).then(x.pool_index.cmp(&y.pool_index)));
            (e, cands)
        })
        .collect()
}

/// Result of [`join_nearby`].
#[derive(Debug, Clone)]
pub struct JoinOutcome {
    pub skeleton: SkeletonGraph,
    /// Pool indices merged into `skeleton`.
    pub merged: Vec<usize>,
    /// Endpoints with several qualifying pool skeletons; resolving these is
    /// left to score-based selection.
    pub ambiguous: Vec<(Pixel, Vec<JoinCandidate>)>,
}

/// Merges `sk` with every pool skeleton that is the unique candidate at one of
/// its endpoints.
pub fn join_nearby(sk: &SkeletonGraph, pool: &[SkeletonGraph], p: &PruneParams) -> JoinOutcome {
    let mut merged = Vec::new();
    let mut ambiguous = Vec::new();
    let mut pixels: BTreeSet<Pixel> = sk.pixels.iter().copied().collect();
    for (e, cands) in join_candidates(sk, pool, p) {
        match cands.len() {
            0 => {}
            1 => {
                let c = &cands[0];
                if merged.contains(&c.pool_index) {
                    continue;
                }
                merged.push(c.pool_index);
                pixels.extend(pool[c.pool_index].pixels.iter().copied());
                pixels.extend(digital_line(c.endpoint, c.pool_endpoint));
            }
            _ => ambiguous.push((e, cands)),
        }
    }
    let skeleton = if merged.is_empty() {
        sk.clone()
    } else {
        SkeletonGraph::from_pixels(pixels)
    };
    JoinOutcome {
        skeleton,
        merged,
        ambiguous,
    }
}

/// Colour-coded rendering: paths white, endpoints red, junctions blue.
pub fn render_classified(width: usize, height: usize, sks: &[SkeletonGraph]) -> image::RgbImage {
    let mut img = image::RgbImage::new(width as u32, height as u32);
    for sk in sks {
        for (&(r, c), class) in sk.pixels.iter().zip(&sk.classes) {
            if r >= height || c >= width {
                continue;
            }
            let color = match class {
                PointClass::Endpoint => [255, 40, 40],
                PointClass::Path => [255, 255, 255],
                PointClass::Junction => [40, 120, 255],
            };
            img.put_pixel(c as u32, r as u32, image::Rgb(color));
        }
    }
    img
}
