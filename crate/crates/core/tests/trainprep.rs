use std::collections::BTreeSet;

use lggshape::manifest::Sequence;
use lggshape::trainprep::{
    apply_transform, assemble_channels, plan_case, tumor_slices, ChannelPolicy, Interpolation,
    Transform,
};
use lggshape::{Slice2D, VoxelVolume};
use proptest::prelude::*;

fn tumor_strategy() -> impl Strategy<Value = VoxelVolume> {
    (1usize..12).prop_flat_map(|nz| {
        proptest::collection::vec(any::<bool>(), nz).prop_map(move |rows| {
            VoxelVolume::mask_from_fn([nz, 3, 3], [1.0; 3], |z, y, x| rows[z] && y == 1 && x == 1)
                .unwrap()
        })
    })
}

fn sequences() -> impl Strategy<Value = BTreeSet<Sequence>> {
    (any::<bool>(), any::<bool>()).prop_map(|(pre, post)| {
        let mut s = BTreeSet::from([Sequence::Flair]);
        if pre {
            s.insert(Sequence::PreContrast);
        }
        if post {
            s.insert(Sequence::PostContrast);
        }
        s
    })
}

fn policy() -> impl Strategy<Value = ChannelPolicy> {
    prop_oneof![
        Just(ChannelPolicy::Auto),
        Just(ChannelPolicy::FlairNeighbors),
        Just(ChannelPolicy::SubstituteMissing)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn plan_counts_and_ranges(
        tumor in tumor_strategy(),
        keep in proptest::collection::vec(any::<bool>(), 12),
        available in sequences(),
        policy in policy(),
        seed in any::<u64>(),
    ) {
        let nz = tumor.dims()[0];
        let kept: Vec<usize> = (0..nz).filter(|&z| keep[z]).collect();
        let entries = plan_case("c1", &tumor, &kept, &available, policy, seed).unwrap();
        let has = tumor_slices(&tumor);
        let tumor_kept = kept.iter().filter(|&&z| has[z]).count();
        prop_assert_eq!(entries.len(), kept.len() - tumor_kept + 3 * tumor_kept);

        for e in &entries {
            prop_assert_eq!(&e.case_id, "c1");
            prop_assert!(kept.contains(&e.z));
            prop_assert!(e.transform.in_range());
            if !has[e.z] {
                prop_assert_eq!(e.transform, Transform::Identity);
            }
            for c in &e.channels {
                prop_assert!(available.contains(&c.sequence));
                let t = e.z as i64 + c.offset;
                prop_assert!(t >= 0 && t < nz as i64);
            }
        }
        for &z in kept.iter().filter(|&&z| has[z]) {
            let kinds: Vec<_> = entries.iter().filter(|e| e.z == z).map(|e| match e.transform { Transform::Identity => 0, Transform::Rotate { .. } => 1, Transform::Scale { .. } => 2 }).collect();
            prop_assert_eq!(kinds.len(), 3);
            prop_assert_eq!(kinds.iter().copied().collect::<BTreeSet<u8>>().len(), 3);
        }
    }

    #[test]
    fn slices_are_planned_independently(tumor in tumor_strategy(), seed in any::<u64>(), drop in 0usize..12) {
        let nz = tumor.dims()[0];
        let available = BTreeSet::from([Sequence::Flair]);
        let all: Vec<usize> = (0..nz).collect();
        let fewer: Vec<usize> = all.iter().copied().filter(|&z| z != drop % nz).collect();
        let a = plan_case("c", &tumor, &all, &available, ChannelPolicy::Auto, seed).unwrap();
        let b = plan_case("c", &tumor, &fewer, &available, ChannelPolicy::Auto, seed).unwrap();
        let kept_a: Vec<_> = a.into_iter().filter(|e| e.z != drop % nz).collect();
        prop_assert_eq!(kept_a, b);
    }

    #[test]
    fn full_cases_use_all_sequences_in_place(nz in 1usize..20, z in 0usize..20) {
        let z = z % nz;
        let all: BTreeSet<Sequence> = Sequence::ALL.into_iter().collect();
        for policy in [ChannelPolicy::Auto, ChannelPolicy::SubstituteMissing] {
            let ch = assemble_channels(&all, nz, z, policy);
            prop_assert!(ch.iter().all(|c| c.offset == 0));
            let seqs: BTreeSet<_> = ch.iter().map(|c| c.sequence).collect();
            prop_assert_eq!(seqs, all.clone());
        }
    }

    #[test]
    fn identity_transform_is_exact(ny in 1usize..10, nx in 1usize..10, v in -100f32..100.0) {
        let s = Slice2D::filled(ny, nx, v);
        for interp in [Interpolation::Bilinear, Interpolation::Nearest] {
            prop_assert_eq!(apply_transform(&s, &Transform::Identity, interp), s.clone());
        }
    }
}

#[test]
fn flair_only_case_uses_neighbours() {
    let flair = BTreeSet::from([Sequence::Flair]);
    let ch = assemble_channels(&flair, 10, 4, ChannelPolicy::Auto);
    assert!(ch.iter().all(|c| c.sequence == Sequence::Flair));
    assert_eq!(ch.map(|c| c.offset), [-1, 0, 1]);
    assert_eq!(
        assemble_channels(&flair, 10, 0, ChannelPolicy::Auto).map(|c| c.offset),
        [0, 0, 1]
    );
    assert_eq!(
        assemble_channels(&flair, 10, 9, ChannelPolicy::Auto).map(|c| c.offset),
        [-1, 0, 0]
    );
}
