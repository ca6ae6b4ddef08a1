//! Connected-component labelling and counting of binary masks.

use crate::raster::BinaryMask;

/// Pixel adjacency used to join crack pixels into components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Connectivity {
    /// Edge neighbours only (N, S, E, W).
    Four,
    /// Edge and corner neighbours.
    #[default]
    Eight,
}

impl Connectivity {
    pub fn as_str(self) -> &'static str {
        match self {
            Connectivity::Four => "four",
            Connectivity::Eight => "eight",
        }
    }
}

impl std::fmt::Display for Connectivity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Connectivity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "four" | "4" => Ok(Connectivity::Four),
            "eight" | "8" => Ok(Connectivity::Eight),
            other => Err(format!("unknown connectivity {other:?} (expected four or eight)")),
        }
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Default)]
struct DisjointSets {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSets {
    fn make_set(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.size.push(1);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Returns `true` if the two sets were distinct.
    fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a as usize] < self.size[b as usize] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b as usize] = a;
        self.size[a as usize] += self.size[b as usize];
        true
    }
}

/// Component labels of a mask: 0 is background, components are numbered
/// `1..=count` in the raster order of their first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
}

impl LabelImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }
}

/// Two-pass labelling over a union-find of provisional labels.
pub fn label(mask: &BinaryMask, conn: Connectivity) -> LabelImage {
    let (w, h) = mask.dims();
    let px = mask.data();
    let mut sets = DisjointSets::default();
    // provisional label + 1, so that 0 stays background
    let mut provisional = vec![0u32; w * h];

    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !px[i] {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut n = 0;
            let mut push = |l: u32| {
                if l != 0 {
                    neighbours[n] = l;
                    n += 1;
                }
            };
            if c > 0 {
                push(provisional[i - 1]);
            }
            if r > 0 {
                push(provisional[i - w]);
                if conn == Connectivity::Eight {
                    if c > 0 {
                        push(provisional[i - w - 1]);
                    }
                    if c + 1 < w {
                        push(provisional[i - w + 1]);
                    }
                }
            }
            provisional[i] = if n == 0 {
                sets.make_set() + 1
            } else {
                let first = neighbours[0];
                for &other in &neighbours[1..n] {
                    sets.union(first - 1, other - 1);
                }
                first
            };
        }
    }

    let mut final_of_root = vec![0u32; sets.parent.len()];
    let mut count = 0u32;
    let labels = provisional
        .iter()
        .map(|&p| {
            if p == 0 {
                return 0;
            }
            let root = sets.find(p - 1) as usize;
            if final_of_root[root] == 0 {
                count += 1;
                final_of_root[root] = count;
            }
            final_of_root[root]
        })
        .collect();

    LabelImage {
        width: w,
        height: h,
        labels,
        count: count as usize,
    }
}

/// Number of components, computed from horizontal runs without building a
/// label raster. Memory is proportional to the number of runs.
pub fn count(mask: &BinaryMask, conn: Connectivity) -> usize {
    let (w, h) = mask.dims();
    let px = mask.data();
    // for eight-connectivity, runs touching diagonally count as overlapping
    let slack = usize::from(conn == Connectivity::Eight);
    let mut sets = DisjointSets::default();
    let mut components = 0usize;
    let mut prev: Vec<(usize, usize, u32)> = Vec::new();
    let mut cur: Vec<(usize, usize, u32)> = Vec::new();

    for r in 0..h {
        let row = &px[r * w..(r + 1) * w];
        cur.clear();
        let mut c = 0;
        while c < w {
            if !row[c] {
                c += 1;
                continue;
            }
            let start = c;
            while c < w && row[c] {
                c += 1;
            }
            cur.push((start, c - 1, sets.make_set()));
            components += 1;
        }

        let mut j = 0;
        for &(start, end, id) in &cur {
            // skip previous runs that end before this one can reach
            while j < prev.len() && prev[j].1 + slack < start {
                j += 1;
            }
            let mut k = j;
            while k < prev.len() && prev[k].0 <= end + slack {
                if sets.union(id, prev[k].2) {
                    components -= 1;
                }
                k += 1;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> BinaryMask {
        BinaryMask::from_rows(rows).unwrap()
    }

    #[test]
    fn empty_mask_has_no_components() {
        let m = BinaryMask::empty(6, 4);
        let l = label(&m, Connectivity::Eight);
        assert_eq!(l.count(), 0);
        assert!(l.labels().iter().all(|&x| x == 0));
        assert_eq!(count(&m, Connectivity::Four), 0);
    }

    #[test]
    fn diagonal_pair_depends_on_connectivity() {
        let m = mask(&["10", "01"]);
        assert_eq!(label(&m, Connectivity::Eight).count(), 1);
        assert_eq!(label(&m, Connectivity::Four).count(), 2);
        assert_eq!(count(&m, Connectivity::Eight), 1);
        assert_eq!(count(&m, Connectivity::Four), 2);
    }

    #[test]
    fn full_mask_is_one_component() {
        assert_eq!(count(&BinaryMask::full(10, 10), Connectivity::Four), 1);
        assert_eq!(count(&BinaryMask::full(10, 10), Connectivity::Eight), 1);
    }

    #[test]
    fn isolated_pixels() {
        let m = mask(&["1.1..", ".....", "..1.."]);
        assert_eq!(count(&m, Connectivity::Eight), 3);
        assert_eq!(label(&m, Connectivity::Eight).count(), 3);
    }

    #[test]
    fn labels_follow_first_encounter_order() {
        // the U merges late; the right arm appears first in raster order after the left
        let m = mask(&["1.1.1", "1.1..", "111.."]);
        let l = label(&m, Connectivity::Four);
        assert_eq!(l.count(), 2);
        assert_eq!(l.get(0, 0), 1);
        assert_eq!(l.get(0, 2), 1);
        assert_eq!(l.get(0, 4), 2);
        assert_eq!(l.get(2, 1), 1);
    }

    #[test]
    fn anti_diagonal_joins_under_eight() {
        let m = mask(&["..1", ".1.", "1.."]);
        assert_eq!(count(&m, Connectivity::Eight), 1);
        assert_eq!(count(&m, Connectivity::Four), 3);
    }

    #[test]
    fn connectivity_parses() {
        assert_eq!("four".parse::<Connectivity>().unwrap(), Connectivity::Four);
        assert_eq!("8".parse::<Connectivity>().unwrap(), Connectivity::Eight);
        assert!("six".parse::<Connectivity>().is_err());
        assert_eq!(Connectivity::default(), Connectivity::Eight);
    }
}
