//! Level lattices, the autonomy/alignment matrix, viewpoints, aspects and
//! the configuration-counting formulas.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::TaxonomyError;

/// How far agents decide system operation independently of architect-defined rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum AutonomyLevel {
    Static = 0,
    Adaptive = 1,
    SelfOrganizing = 2,
}

/// Where and when alignment with user intent is established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum AlignmentLevel {
    Integrated = 0,
    UserGuided = 1,
    RealTimeResponsive = 2,
}

macro_rules! level_impls {
    ($ty:ident, [$($v:ident = $n:expr, $label:expr);+]) => {
        impl $ty {
            pub const ALL: [$ty; 3] = [$($ty::$v),+];

            pub fn ordinal(self) -> u8 {
                self as u8
            }

            pub fn from_ordinal(n: u8) -> Option<Self> {
                match n {
                    $($n => Some($ty::$v),)+
                    _ => None,
                }
            }

            pub fn label(self) -> &'static str {
                match self {
                    $($ty::$v => $label,)+
                }
            }
        }

        impl TryFrom<u8> for $ty {
            type Error = TaxonomyError;

            fn try_from(n: u8) -> Result<Self, Self::Error> {
                $ty::from_ordinal(n).ok_or(TaxonomyError::LevelOutOfRange(n as i64))
            }
        }

        impl From<$ty> for u8 {
            fn from(level: $ty) -> u8 {
                level.ordinal()
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "L{} {}", self.ordinal(), self.label())
            }
        }
    };
}

level_impls!(AutonomyLevel, [
    Static = 0, "Static Autonomy";
    Adaptive = 1, "Adaptive Autonomy";
    SelfOrganizing = 2, "Self-Organizing Autonomy"
]);

level_impls!(AlignmentLevel, [
    Integrated = 0, "Integrated Alignment";
    UserGuided = 1, "User-Guided Alignment";
    RealTimeResponsive = 2, "Real-Time Responsive Alignment"
]);

/// One of the nine cells of the autonomy/alignment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellName {
    RuleDrivenAutomation,
    UserGuidedAutomation,
    UserSupervisedAutomation,
    PreConfiguredAdaptation,
    UserGuidedAdaptation,
    UserCollaborativeAdaptation,
    BoundedAutonomy,
    UserGuidedAutonomy,
    UserResponsiveAutonomy,
}

impl CellName {
    /// Column-major: autonomy selects the column, alignment ascends within it.
    const GRID: [[CellName; 3]; 3] = [
        [
            CellName::RuleDrivenAutomation,
            CellName::UserGuidedAutomation,
            CellName::UserSupervisedAutomation,
        ],
        [
            CellName::PreConfiguredAdaptation,
            CellName::UserGuidedAdaptation,
            CellName::UserCollaborativeAdaptation,
        ],
        [
            CellName::BoundedAutonomy,
            CellName::UserGuidedAutonomy,
            CellName::UserResponsiveAutonomy,
        ],
    ];

    /// 1-based matrix index.
    pub fn index(self) -> u8 {
        let (au, al) = self.levels();
        au.ordinal() * 3 + al.ordinal() + 1
    }

    pub fn levels(self) -> (AutonomyLevel, AlignmentLevel) {
        for au in AutonomyLevel::ALL {
            for al in AlignmentLevel::ALL {
                if Self::GRID[au as usize][al as usize] == self {
                    return (au, al);
                }
            }
        }
        unreachable!("every cell is in the grid")
    }

    pub fn display_name(self) -> &'static str {
        match self {
            CellName::RuleDrivenAutomation => "Rule-Driven Automation",
            CellName::UserGuidedAutomation => "User-Guided Automation",
            CellName::UserSupervisedAutomation => "User-Supervised Automation",
            CellName::PreConfiguredAdaptation => "Pre-Configured Adaptation",
            CellName::UserGuidedAdaptation => "User-Guided Adaptation",
            CellName::UserCollaborativeAdaptation => "User-Collaborative Adaptation",
            CellName::BoundedAutonomy => "Bounded Autonomy",
            CellName::UserGuidedAutonomy => "User-Guided Autonomy",
            CellName::UserResponsiveAutonomy => "User-Responsive Autonomy",
        }
    }
}

/// Maps an (autonomy, alignment) pair onto its matrix cell.
pub fn combination_name(au: AutonomyLevel, al: AlignmentLevel) -> CellName {
    CellName::GRID[au as usize][al as usize]
}

/// Architectural lens over a multi-agent system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Viewpoint {
    GoalDrivenTaskManagement,
    MultiAgentCollaboration,
    AgentComposition,
    ContextInteraction,
}

impl Viewpoint {
    pub const ALL: [Viewpoint; 4] = [
        Viewpoint::GoalDrivenTaskManagement,
        Viewpoint::MultiAgentCollaboration,
        Viewpoint::AgentComposition,
        Viewpoint::ContextInteraction,
    ];

    pub fn short(self) -> char {
        match self {
            Viewpoint::GoalDrivenTaskManagement => 'G',
            Viewpoint::MultiAgentCollaboration => 'M',
            Viewpoint::AgentComposition => 'A',
            Viewpoint::ContextInteraction => 'C',
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Viewpoint::GoalDrivenTaskManagement => "Goal-driven Task Management",
            Viewpoint::MultiAgentCollaboration => "Multi-Agent Collaboration",
            Viewpoint::AgentComposition => "Agent Composition",
            Viewpoint::ContextInteraction => "Context Interaction",
        }
    }

    pub fn aspects(self) -> impl Iterator<Item = AspectId> {
        AspectId::ALL.into_iter().filter(move |a| a.viewpoint() == self)
    }
}

/// The twelve classifiable architectural aspects, in assessment-table column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AspectId {
    Decom,
    Orch,
    Synth,
    CommP,
    PrEng,
    ActM,
    AGen,
    RoleD,
    MemU,
    NetM,
    Integ,
    Util,
}

impl AspectId {
    pub const ALL: [AspectId; 12] = [
        AspectId::Decom,
        AspectId::Orch,
        AspectId::Synth,
        AspectId::CommP,
        AspectId::PrEng,
        AspectId::ActM,
        AspectId::AGen,
        AspectId::RoleD,
        AspectId::MemU,
        AspectId::NetM,
        AspectId::Integ,
        AspectId::Util,
    ];

    pub fn viewpoint(self) -> Viewpoint {
        aspect_viewpoint(self)
    }

    /// Lower-case key used in profile and scenario files.
    pub fn key(self) -> &'static str {
        match self {
            AspectId::Decom => "decom",
            AspectId::Orch => "orch",
            AspectId::Synth => "synth",
            AspectId::CommP => "commp",
            AspectId::PrEng => "preng",
            AspectId::ActM => "actm",
            AspectId::AGen => "agen",
            AspectId::RoleD => "roled",
            AspectId::MemU => "memu",
            AspectId::NetM => "netm",
            AspectId::Integ => "integ",
            AspectId::Util => "util",
        }
    }

    /// Column heading as printed in assessment tables.
    pub fn code(self) -> &'static str {
        match self {
            AspectId::Decom => "Decom",
            AspectId::Orch => "Orch",
            AspectId::Synth => "Synth",
            AspectId::CommP => "CommP",
            AspectId::PrEng => "PrEng",
            AspectId::ActM => "ActM",
            AspectId::AGen => "AGen",
            AspectId::RoleD => "RoleD",
            AspectId::MemU => "MemU",
            AspectId::NetM => "NetM",
            AspectId::Integ => "Integ",
            AspectId::Util => "Util",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            AspectId::Decom => "Decomposition",
            AspectId::Orch => "Orchestration",
            AspectId::Synth => "Synthesis",
            AspectId::CommP => "Communication-Protocol Management",
            AspectId::PrEng => "Prompt Engineering",
            AspectId::ActM => "Action Management",
            AspectId::AGen => "Agent Generation",
            AspectId::RoleD => "Role Definition",
            AspectId::MemU => "Memory Usage",
            AspectId::NetM => "Network Management",
            AspectId::Integ => "Resources Integration",
            AspectId::Util => "Resources Utilization",
        }
    }

    /// Position in the canonical column order.
    pub fn position(self) -> usize {
        self as usize
    }
}

impl fmt::Display for AspectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for AspectId {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AspectId::ALL
            .into_iter()
            .find(|a| a.key().eq_ignore_ascii_case(s))
            .ok_or_else(|| TaxonomyError::UnknownAspect(s.to_string()))
    }
}

pub fn aspect_viewpoint(aspect: AspectId) -> Viewpoint {
    use AspectId::*;
    match aspect {
        Decom | Orch | Synth => Viewpoint::GoalDrivenTaskManagement,
        CommP | PrEng | ActM => Viewpoint::MultiAgentCollaboration,
        AGen | RoleD | MemU | NetM => Viewpoint::AgentComposition,
        Integ | Util => Viewpoint::ContextInteraction,
    }
}

/// Autonomy and alignment assigned to one aspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AspectConfig {
    #[serde(rename = "au")]
    pub autonomy: AutonomyLevel,
    #[serde(rename = "al")]
    pub alignment: AlignmentLevel,
}

impl AspectConfig {
    pub fn new(autonomy: AutonomyLevel, alignment: AlignmentLevel) -> Self {
        Self { autonomy, alignment }
    }

    /// Builds from raw ordinals; `None` if either is outside 0..=2.
    pub fn from_ordinals(au: u8, al: u8) -> Option<Self> {
        Some(Self::new(AutonomyLevel::from_ordinal(au)?, AlignmentLevel::from_ordinal(al)?))
    }

    pub fn cell(self) -> CellName {
        combination_name(self.autonomy, self.alignment)
    }
}

/// Result of the configuration-counting formulas.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigCounts {
    pub total_aspects: u64,
    pub single_options_per_aspect: u64,
    pub total_single_options: u64,
    #[serde(serialize_with = "serialize_biguint")]
    pub total_combined: BigUint,
}

fn serialize_biguint<S: serde::Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

/// Counts single and combined configuration options for a taxonomy with the
/// given number of aspects per viewpoint and `level_count` levels per dimension.
pub fn configuration_counts(
    aspect_counts_per_viewpoint: &[i64],
    level_count: i64,
) -> Result<ConfigCounts, TaxonomyError> {
    if let Some(&bad) = aspect_counts_per_viewpoint.iter().find(|&&c| c < 0) {
        return Err(TaxonomyError::NegativeCount(bad));
    }
    if level_count < 1 {
        return Err(TaxonomyError::InvalidLevelCount(level_count));
    }
    let total_aspects: u64 = aspect_counts_per_viewpoint
        .iter()
        .try_fold(0u64, |acc, &c| acc.checked_add(c as u64))
        .ok_or(TaxonomyError::Overflow)?;
    let level_count = level_count as u64;
    let single = level_count.checked_mul(level_count).ok_or(TaxonomyError::Overflow)?;
    let total_single = total_aspects.checked_mul(single).ok_or(TaxonomyError::Overflow)?;
    let exponent = u32::try_from(total_aspects).map_err(|_| TaxonomyError::Overflow)?;
    let total_combined = BigUint::from(single).pow(exponent);
    Ok(ConfigCounts {
        total_aspects,
        single_options_per_aspect: single,
        total_single_options: total_single,
        total_combined,
    })
}
