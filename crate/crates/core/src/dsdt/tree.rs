use rand::seq::SliceRandom;

use super::{Dsdt, DsdtNode, Predicate, SnrBand, TreeKind};
use crate::corpus::{SpeakerClass, UtterancePair};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

/// High SNR means `snr_db >= threshold`.
pub const DEFAULT_SNR_THRESHOLD_DB: f64 = 10.0;

fn node(id: usize, depth: usize, label: &str, predicate: Predicate, members: Vec<String>, parent: Option<usize>) -> DsdtNode {
    DsdtNode {
        id,
        depth,
        label: label.to_string(),
        predicate,
        members,
        parent,
        children: Vec::new(),
    }
}

/// Seven-node utterance-attribute tree: root, speaker class, class × SNR
/// regime. Node ids: 0 root, 1 A, 2 B, 3 A/high, 4 A/low, 5 B/high, 6 B/low.
pub fn build_uat(pairs: &[UtterancePair], snr_threshold_db: f64) -> Result<Dsdt> {
    if !snr_threshold_db.is_finite() {
        return Err(Error::invalid("SNR threshold must be finite"));
    }
    let mut groups: [Vec<String>; 4] = Default::default();
    for p in pairs {
        let (class, snr) = p.tag.require_attributes(&p.id)?;
        let slot = match (class, snr >= snr_threshold_db) {
            (SpeakerClass::A, true) => 0,
            (SpeakerClass::A, false) => 1,
            (SpeakerClass::B, true) => 2,
            (SpeakerClass::B, false) => 3,
        };
        groups[slot].push(p.id.clone());
    }
    let all: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
    let class_members = |c: SpeakerClass| -> Vec<String> {
        pairs
            .iter()
            .filter(|p| p.tag.speaker_class == Some(c))
            .map(|p| p.id.clone())
            .collect()
    };
    let attr = |speaker, snr| Predicate::Attributes { speaker, snr };
    let [a_high, a_low, b_high, b_low] = groups;
    let mut nodes = vec![
        node(0, 0, "root", Predicate::All, all, None),
        node(1, 1, "A", attr(Some(SpeakerClass::A), None), class_members(SpeakerClass::A), Some(0)),
        node(2, 1, "B", attr(Some(SpeakerClass::B), None), class_members(SpeakerClass::B), Some(0)),
        node(3, 2, "A/high", attr(Some(SpeakerClass::A), Some(SnrBand::High)), a_high, Some(1)),
        node(4, 2, "A/low", attr(Some(SpeakerClass::A), Some(SnrBand::Low)), a_low, Some(1)),
        node(5, 2, "B/high", attr(Some(SpeakerClass::B), Some(SnrBand::High)), b_high, Some(2)),
        node(6, 2, "B/low", attr(Some(SpeakerClass::B), Some(SnrBand::Low)), b_low, Some(2)),
    ];
    link_binary(&mut nodes);
    Ok(Dsdt {
        kind: TreeKind::Uat,
        nodes,
        layer_labels: vec!["root".into(), "speaker".into(), "speaker×snr".into()],
        snr_threshold_db,
    })
}

fn link_binary(nodes: &mut [DsdtNode]) {
    nodes[0].children = vec![1, 2];
    nodes[1].children = vec![3, 4];
    nodes[2].children = vec![5, 6];
}

/// Random tree with the UAT shape: each layer halves its parent with a
/// seeded shuffle (sibling sizes differ by at most one).
pub fn build_rt(pairs: &[UtterancePair], seed: u64) -> Result<Dsdt> {
    if pairs.len() < 4 {
        return Err(Error::invalid(format!("random tree needs at least 4 pairs, got {}", pairs.len())));
    }
    let all: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
    let halve = |members: &[String], index: u64| -> (Vec<String>, Vec<String>) {
        let mut shuffled = members.to_vec();
        shuffled.shuffle(&mut rng_from_seed(derive_seed(seed, "random-tree", index)));
        let right = shuffled.split_off(shuffled.len() / 2);
        (shuffled, right)
    };
    let (l, r) = halve(&all, 0);
    let (ll, lr) = halve(&l, 1);
    let (rl, rr) = halve(&r, 2);
    let p = || Predicate::RandomSubset;
    let mut nodes = vec![
        node(0, 0, "root", Predicate::All, all, None),
        node(1, 1, "R0", p(), l, Some(0)),
        node(2, 1, "R1", p(), r, Some(0)),
        node(3, 2, "R00", p(), ll, Some(1)),
        node(4, 2, "R01", p(), lr, Some(1)),
        node(5, 2, "R10", p(), rl, Some(2)),
        node(6, 2, "R11", p(), rr, Some(2)),
    ];
    link_binary(&mut nodes);
    Ok(Dsdt {
        kind: TreeKind::Rt { seed },
        nodes,
        layer_labels: vec!["root".into(), "random".into(), "random".into()],
        snr_threshold_db: DEFAULT_SNR_THRESHOLD_DB,
    })
}
