use serde::{Deserialize, Serialize};

use super::Dsdt;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanVariant {
    Uat2,
    Uat4,
    Uat6,
    /// Every depth-1 node; used for cluster trees.
    Layer1,
    Custom(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SatMode {
    None,
    Ss,
    Wd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Full,
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Branch {
    pub node: usize,
    pub band: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub variant: PlanVariant,
    pub nodes: Vec<usize>,
    pub sat_mode: SatMode,
}

impl PartitionPlan {
    /// J × K branches, node-major, low band before high.
    pub fn branches(&self) -> Vec<Branch> {
        let bands: &[Band] = match self.sat_mode {
            SatMode::None => &[Band::Full],
            SatMode::Ss | SatMode::Wd => &[Band::Low, Band::High],
        };
        self.nodes
            .iter()
            .flat_map(|&node| bands.iter().map(move |&band| Branch { node, band }))
            .collect()
    }

    pub fn branch_count(&self) -> usize {
        self.nodes.len() * if self.sat_mode == SatMode::None { 1 } else { 2 }
    }

    pub fn label(&self) -> String {
        let base = match &self.variant {
            PlanVariant::Uat2 => "UAT2".to_string(),
            PlanVariant::Uat4 => "UAT4".to_string(),
            PlanVariant::Uat6 => "UAT6".to_string(),
            PlanVariant::Layer1 => format!("L1x{}", self.nodes.len()),
            PlanVariant::Custom(ids) => format!("custom{ids:?}"),
        };
        match self.sat_mode {
            SatMode::None => base,
            SatMode::Ss => format!("{base}+SS"),
            SatMode::Wd => format!("{base}+WD"),
        }
    }
}

pub fn select_plan(tree: &Dsdt, variant: PlanVariant) -> Result<PartitionPlan> {
    let depth = |d: usize| -> Result<Vec<usize>> {
        let ids = tree.nodes_at_depth(d);
        if ids.is_empty() {
            return Err(Error::invalid(format!("tree has no depth-{d} nodes")));
        }
        Ok(ids)
    };
    let nodes = match &variant {
        PlanVariant::Uat2 | PlanVariant::Layer1 => depth(1)?,
        PlanVariant::Uat4 => depth(2)?,
        PlanVariant::Uat6 => {
            let mut ids = depth(1)?;
            ids.extend(depth(2)?);
            ids
        }
        PlanVariant::Custom(ids) => {
            if ids.is_empty() {
                return Err(Error::invalid("custom plan selects no nodes"));
            }
            for &id in ids {
                tree.node(id)?;
            }
            let mut seen = std::collections::HashSet::new();
            if !ids.iter().all(|id| seen.insert(*id)) {
                return Err(Error::invalid("custom plan repeats a node"));
            }
            ids.clone()
        }
    };
    Ok(PartitionPlan { variant, nodes, sat_mode: SatMode::None })
}

pub fn attach_sat(plan: &PartitionPlan, mode: SatMode) -> Result<PartitionPlan> {
    if plan.sat_mode != SatMode::None {
        return Err(Error::invalid("band transform already attached to plan"));
    }
    if mode == SatMode::None {
        return Err(Error::invalid("attach_sat needs SS or WD"));
    }
    Ok(PartitionPlan { sat_mode: mode, ..plan.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SpeakerClass;
    use crate::dsdt::build_uat;
    use crate::dsdt::tree::tests::toy_pairs;

    fn tree() -> Dsdt {
        use SpeakerClass::*;
        build_uat(&toy_pairs(&[(A, 15.0), (A, 0.0), (B, 15.0), (B, 0.0)]), 10.0).unwrap()
    }

    #[test]
    fn variants_pick_expected_layers() {
        let t = tree();
        assert_eq!(select_plan(&t, PlanVariant::Uat2).unwrap().nodes, vec![1, 2]);
        assert_eq!(select_plan(&t, PlanVariant::Uat4).unwrap().nodes, vec![3, 4, 5, 6]);
        let six = select_plan(&t, PlanVariant::Uat6).unwrap();
        assert_eq!(six.branch_count(), 6);
        let root = select_plan(&t, PlanVariant::Custom(vec![0])).unwrap();
        assert_eq!(root.branches(), vec![Branch { node: 0, band: Band::Full }]);
    }

    #[test]
    fn uat6_covers_uat2_and_uat4() {
        let t = tree();
        let six = select_plan(&t, PlanVariant::Uat6).unwrap().nodes;
        for v in [PlanVariant::Uat2, PlanVariant::Uat4] {
            for id in select_plan(&t, v).unwrap().nodes {
                assert!(six.contains(&id));
            }
        }
    }

    #[test]
    fn unknown_or_repeated_custom_ids_fail() {
        let t = tree();
        assert!(select_plan(&t, PlanVariant::Custom(vec![9])).is_err());
        assert!(select_plan(&t, PlanVariant::Custom(vec![1, 1])).is_err());
        assert!(select_plan(&t, PlanVariant::Custom(vec![])).is_err());
    }

    #[test]
    fn sat_doubles_branches_once() {
        let t = tree();
        let wd = attach_sat(&select_plan(&t, PlanVariant::Uat6).unwrap(), SatMode::Wd).unwrap();
        assert_eq!(wd.branch_count(), 12);
        assert_eq!(wd.branches().len(), 12);
        let ss = attach_sat(&select_plan(&t, PlanVariant::Uat2).unwrap(), SatMode::Ss).unwrap();
        assert_eq!(ss.branches().len(), 4);
        assert_eq!(ss.branches()[1], Branch { node: 1, band: Band::High });
        assert!(attach_sat(&ss, SatMode::Wd).is_err());
        assert_eq!(ss.label(), "UAT2+SS");
    }

    #[test]
    fn plan_and_tree_round_trip_through_json() {
        let t = tree();
        let back: Dsdt = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
        let p = attach_sat(&select_plan(&t, PlanVariant::Custom(vec![0, 3])).unwrap(), SatMode::Ss).unwrap();
        let back: PartitionPlan = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
