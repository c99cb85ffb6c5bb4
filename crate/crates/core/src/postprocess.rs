//! 6-connected component labeling of 3D masks and largest-component
//! filtering.

use crate::error::{Error, Result};
use crate::volume::VoxelVolume;

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabeling {
    pub dims: [usize; 3],
    /// 0 for background, `1..=k` for components, z-major like the input.
    pub labels: Vec<u32>,
    /// `sizes[i]` is the voxel count of label `i + 1`.
    pub sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Component sizes in descending order.
    pub fn sizes_descending(&self) -> Vec<usize> {
        let mut s = self.sizes.clone();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s
    }

    /// Label of the largest component; ties go to the smaller label, which
    /// is the component whose first voxel comes earliest in z-major order.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(u32, usize)> = None;
        for (i, &s) in self.sizes.iter().enumerate() {
            if best.map_or(true, |(_, bs)| s > bs) {
                best = Some((i as u32 + 1, s));
            }
        }
        best.map(|(l, _)| l)
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        DisjointSet { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
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

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        // keep the smaller provisional id as root
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

fn require_mask(mask: &VoxelVolume) -> Result<()> {
    if mask.is_mask() {
        Ok(())
    } else {
        Err(Error::WrongKind { expected: "mask" })
    }
}

/// Labels the 6-connected foreground components of a mask.
///
/// Two-pass union-find; final label ids follow the order in which each
/// component's first voxel appears in a z-major scan.
pub fn label_components_6(mask: &VoxelVolume) -> Result<ComponentLabeling> {
    require_mask(mask)?;
    let [nz, ny, nx] = mask.dims();
    let data = mask.data();
    let plane = ny * nx;
    let mut provisional = vec![0u32; data.len()];
    let mut sets = DisjointSet::new();

    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = (z * ny + y) * nx + x;
                if data[i] == 0.0 {
                    continue;
                }
                let back = [
                    (x > 0).then(|| provisional[i - 1]),
                    (y > 0).then(|| provisional[i - nx]),
                    (z > 0).then(|| provisional[i - plane]),
                ];
                let mut label = 0u32;
                for n in back.into_iter().flatten().filter(|&n| n != 0) {
                    label = if label == 0 {
                        sets.find(n)
                    } else {
                        sets.union(label, n)
                    };
                }
                provisional[i] = if label == 0 { sets.make() } else { label };
            }
        }
    }

    // Provisional ids are created in scan order, and roots are always the
    // smallest id of their set, so numbering roots by first encounter
    // gives the scan-order labeling.
    let mut remap = vec![0u32; sets.parent.len()];
    let mut sizes = Vec::new();
    let mut labels = provisional;
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = sets.find(*l) as usize;
        if remap[root] == 0 {
            sizes.push(0);
            remap[root] = sizes.len() as u32;
        }
        *l = remap[root];
        sizes[*l as usize - 1] += 1;
    }

    Ok(ComponentLabeling {
        dims: mask.dims(),
        labels,
        sizes,
    })
}

/// Keeps only the largest 6-connected component. Empty input gives empty
/// output.
pub fn keep_largest_component(mask: &VoxelVolume) -> Result<VoxelVolume> {
    let labeling = label_components_6(mask)?;
    let keep = labeling.largest().unwrap_or(0);
    let data = labeling
        .labels
        .iter()
        .map(|&l| if keep != 0 && l == keep { 1.0 } else { 0.0 })
        .collect();
    mask.with_data(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(dims: [usize; 3], on: &[[usize; 3]]) -> VoxelVolume {
        VoxelVolume::mask_from_fn(dims, [1.0; 3], |z, y, x| on.contains(&[z, y, x])).unwrap()
    }

    #[test]
    fn single_voxel() {
        let l = label_components_6(&mask([2, 2, 2], &[[0, 0, 0]])).unwrap();
        assert_eq!(l.sizes, vec![1]);
        assert_eq!(l.labels[0], 1);
    }

    #[test]
    fn edge_diagonal_is_two_components() {
        let l = label_components_6(&mask([1, 2, 2], &[[0, 0, 0], [0, 1, 1]])).unwrap();
        assert_eq!(l.count(), 2);
        let l = label_components_6(&mask([2, 2, 2], &[[0, 0, 0], [1, 1, 0]])).unwrap();
        assert_eq!(l.count(), 2);
    }

    #[test]
    fn u_shape_merges_into_one_component() {
        // Two arms that only join at the bottom row: the merge happens after
        // both arms got provisional labels.
        let on = [
            [0, 0, 0],
            [0, 1, 0],
            [0, 2, 0],
            [0, 2, 1],
            [0, 2, 2],
            [0, 1, 2],
            [0, 0, 2],
        ];
        let l = label_components_6(&mask([1, 3, 3], &on)).unwrap();
        assert_eq!(l.sizes, vec![7]);
    }

    #[test]
    fn keeps_component_of_ten() {
        let mut on = Vec::new();
        for x in 0..10 {
            on.push([0, 0, x]);
        }
        for x in 0..3 {
            on.push([2, 2, x]);
        }
        on.push([4, 4, 4]);
        let m = mask([5, 5, 10], &on);
        let l = label_components_6(&m).unwrap();
        assert_eq!(l.sizes_descending(), vec![10, 3, 1]);
        let kept = keep_largest_component(&m).unwrap();
        assert_eq!(kept.foreground_count(), 10);
        assert_eq!(kept.get(0, 0, 9), 1.0);
    }

    #[test]
    fn empty_stays_empty() {
        let m = VoxelVolume::empty_mask([3, 3, 3], [1.0; 3]).unwrap();
        assert_eq!(keep_largest_component(&m).unwrap(), m);
    }

    #[test]
    fn tie_goes_to_earliest_component() {
        let a: Vec<[usize; 3]> = (0..5).map(|x| [0, 0, x]).collect();
        let b: Vec<[usize; 3]> = (0..5).map(|x| [2, 3, x]).collect();
        let on: Vec<[usize; 3]> = b.iter().chain(a.iter()).cloned().collect();
        let kept = keep_largest_component(&mask([3, 4, 5], &on)).unwrap();
        assert_eq!(kept.foreground_count(), 5);
        assert_eq!(kept.get(0, 0, 0), 1.0);
        assert_eq!(kept.get(2, 3, 0), 0.0);
    }

    #[test]
    fn intensity_input_rejected() {
        let v = VoxelVolume::intensity([1, 1, 1], [1.0; 3], vec![1.0]).unwrap();
        assert!(label_components_6(&v).is_err());
    }
}
