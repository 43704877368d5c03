//! The shipped default scenario: synthetic spec, code maps, groups,
//! baseline formula, candidate pool and the two contrasting policies.

use std::path::Path;

use crate::cohort::{parse_groups, CodeMaps, GroupDefinition};
use crate::design::{AgeBanding, Formula};
use crate::error::Result;
use crate::stepwise::{Pool, SelectionPolicy};
use crate::synthpop::SyntheticSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: SyntheticSpec,
    pub maps: CodeMaps,
    pub groups: Vec<GroupDefinition>,
    pub baseline: Formula,
    pub pool: Pool,
    pub max_r2: SelectionPolicy,
    pub net_comp: SelectionPolicy,
    pub banding: AgeBanding,
}

pub const TARGET_GROUP: &str = "mhsud";

macro_rules! scenario_file {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/scenario/", $name))
    };
}

impl Scenario {
    /// The built-in scenario (n = 200,000, fixed seed).
    pub fn default_scenario() -> Self {
        Self::from_texts(
            scenario_file!("spec.json"),
            scenario_file!("hcc_map.csv"),
            scenario_file!("ccs_map.csv"),
            scenario_file!("hierarchy.csv"),
            scenario_file!("groups.json"),
            scenario_file!("baseline.json"),
            scenario_file!("pool.json"),
            scenario_file!("policies/max_r2.json"),
            scenario_file!("policies/net_comp.json"),
        )
        .expect("built-in scenario is valid")
    }

    /// Reads a scenario laid out like `data/scenario`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| crate::Error::File { path, source })
        };
        Self::from_texts(
            &read("spec.json")?,
            &read("hcc_map.csv")?,
            &read("ccs_map.csv")?,
            &read("hierarchy.csv")?,
            &read("groups.json")?,
            &read("baseline.json")?,
            &read("pool.json")?,
            &read("policies/max_r2.json")?,
            &read("policies/net_comp.json")?,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn from_texts(
        spec: &str,
        hcc: &str,
        ccs: &str,
        hierarchy: &str,
        groups: &str,
        baseline: &str,
        pool: &str,
        max_r2: &str,
        net_comp: &str,
    ) -> Result<Self> {
        let maps = CodeMaps::from_readers(hcc.as_bytes(), ccs.as_bytes(), hierarchy.as_bytes())?;
        let spec = SyntheticSpec::parse(spec)?;
        spec.validate(Some(&maps))?;
        let groups = parse_groups(groups)?;
        for g in &groups {
            g.validate(&maps)?;
        }
        let banding = AgeBanding::default();
        let baseline = Formula::parse(baseline)?;
        baseline.validate_cells(&banding)?;
        Ok(Scenario {
            spec,
            maps,
            groups,
            baseline,
            pool: Pool::parse(pool)?,
            max_r2: SelectionPolicy::parse(max_r2)?,
            net_comp: SelectionPolicy::parse(net_comp)?,
            banding,
        })
    }

    pub fn target_group(&self) -> &GroupDefinition {
        self.groups
            .iter()
            .find(|g| g.group_id == TARGET_GROUP)
            .expect("scenario defines the target group")
    }

    /// Baseline plus every pool variable: all columns the search can touch.
    pub fn universe(&self) -> Result<Formula> {
        let extra: Vec<_> = self
            .pool
            .variables()
            .filter(|v| !self.baseline.contains(v))
            .cloned()
            .collect();
        self.baseline.with_appended(&extra)
    }
}
