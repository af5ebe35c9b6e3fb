use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::SearchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Paradigm {
    Discriminative,
    Generative,
}

impl Paradigm {
    pub const ALL: [Paradigm; 2] = [Paradigm::Discriminative, Paradigm::Generative];

    pub fn name(self) -> &'static str {
        match self {
            Paradigm::Discriminative => "discriminative",
            Paradigm::Generative => "generative",
        }
    }

    pub fn backbones(self) -> &'static [Backbone] {
        match self {
            Paradigm::Discriminative => &[Backbone::ResNet, Backbone::GatedMlp, Backbone::PathwayMasked],
            Paradigm::Generative => &[Backbone::ConditionalVae, Backbone::FlowMatching],
        }
    }

    /// Backbone a paradigm-level node is evaluated with before one is chosen.
    pub fn default_backbone(self) -> Backbone {
        self.backbones()[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Backbone {
    ResNet,
    GatedMlp,
    PathwayMasked,
    ConditionalVae,
    FlowMatching,
}

impl Backbone {
    pub const ALL: [Backbone; 5] = [
        Backbone::ResNet,
        Backbone::GatedMlp,
        Backbone::PathwayMasked,
        Backbone::ConditionalVae,
        Backbone::FlowMatching,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Backbone::ResNet => "resnet",
            Backbone::GatedMlp => "gated_mlp",
            Backbone::PathwayMasked => "pathway_masked",
            Backbone::ConditionalVae => "conditional_vae",
            Backbone::FlowMatching => "flow_matching",
        }
    }

    pub fn paradigm(self) -> Paradigm {
        match self {
            Backbone::ResNet | Backbone::GatedMlp | Backbone::PathwayMasked => Paradigm::Discriminative,
            Backbone::ConditionalVae | Backbone::FlowMatching => Paradigm::Generative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum LossKind {
    #[default]
    Mse,
    Huber,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Huber => "huber",
        }
    }
}

/// Training knobs a Hyperparam refinement sets. `reg_scale` multiplies the
/// evaluator's base regularization; `dropout` is in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub lr: f64,
    pub reg_scale: f64,
    pub dropout: f64,
}

impl HyperParams {
    pub const DEFAULT: HyperParams = HyperParams { lr: 1e-3, reg_scale: 1.0, dropout: 0.0 };

    /// The fixed grid walked by [`GridProposer`](super::GridProposer).
    pub const GRID: [HyperParams; 4] = [
        HyperParams { lr: 3e-4, reg_scale: 0.1, dropout: 0.0 },
        HyperParams { lr: 3e-4, reg_scale: 10.0, dropout: 0.1 },
        HyperParams { lr: 3e-3, reg_scale: 0.01, dropout: 0.0 },
        HyperParams { lr: 3e-3, reg_scale: 1.0, dropout: 0.2 },
    ];

    pub fn validate(&self) -> Result<(), SearchError> {
        let ok = self.lr.is_finite()
            && self.lr > 0.0
            && self.reg_scale.is_finite()
            && self.reg_scale > 0.0
            && (0.0..1.0).contains(&self.dropout);
        if ok {
            Ok(())
        } else {
            Err(SearchError::InvalidAction(format!("hyperparameters out of range: {self}")))
        }
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lr={},reg={},dropout={}", self.lr, self.reg_scale, self.dropout)
    }
}

impl FromStr for HyperParams {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SearchError::InvalidAction(format!("cannot parse hyperparameters '{s}'"));
        let mut lr = None;
        let mut reg = None;
        let mut dropout = None;
        for part in s.split(',') {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            let v: f64 = v.trim().parse().map_err(|_| bad())?;
            match k.trim() {
                "lr" => lr = Some(v),
                "reg" => reg = Some(v),
                "dropout" => dropout = Some(v),
                _ => return Err(bad()),
            }
        }
        let hp = HyperParams { lr: lr.ok_or_else(bad)?, reg_scale: reg.ok_or_else(bad)?, dropout: dropout.ok_or_else(bad)? };
        hp.validate()?;
        Ok(hp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Refinement {
    Hyperparam(HyperParams),
    Loss(LossKind),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Paradigm(Paradigm),
    Backbone(Backbone),
    Refinement(Refinement),
    Debug,
}

impl Action {
    pub fn is_refinement(&self) -> bool {
        matches!(self, Action::Refinement(_))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Paradigm(p) => write!(f, "paradigm:{}", p.name()),
            Action::Backbone(b) => write!(f, "backbone:{}", b.name()),
            Action::Refinement(Refinement::Hyperparam(hp)) => write!(f, "hyperparam:{hp}"),
            Action::Refinement(Refinement::Loss(l)) => write!(f, "loss:{}", l.name()),
            Action::Debug => f.write_str("debug"),
        }
    }
}

impl FromStr for Action {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SearchError::InvalidAction(format!("unknown action '{s}'"));
        if s == "debug" {
            return Ok(Action::Debug);
        }
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "paradigm" => Paradigm::ALL.into_iter().find(|p| p.name() == value).map(Action::Paradigm).ok_or_else(bad),
            "backbone" => Backbone::ALL.into_iter().find(|b| b.name() == value).map(Action::Backbone).ok_or_else(bad),
            "hyperparam" => Ok(Action::Refinement(Refinement::Hyperparam(value.parse()?))),
            "loss" => match value {
                "mse" => Ok(Action::Refinement(Refinement::Loss(LossKind::Mse))),
                "huber" => Ok(Action::Refinement(Refinement::Loss(LossKind::Huber))),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A materialized pipeline configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub paradigm: Paradigm,
    pub backbone: Backbone,
    pub hyperparams: Option<HyperParams>,
    pub loss: LossKind,
    pub debug_fixed: bool,
}

impl Candidate {
    pub fn new(
        paradigm: Paradigm,
        backbone: Backbone,
        hyperparams: Option<HyperParams>,
        loss: LossKind,
    ) -> Result<Self, SearchError> {
        if backbone.paradigm() != paradigm {
            return Err(SearchError::InvalidAction(format!(
                "backbone {} is not available under paradigm {}",
                backbone.name(),
                paradigm.name()
            )));
        }
        if let Some(hp) = &hyperparams {
            hp.validate()?;
        }
        Ok(Candidate { paradigm, backbone, hyperparams, loss, debug_fixed: false })
    }

    /// Hyperparameters in effect, falling back to the defaults.
    pub fn effective_hyperparams(&self) -> HyperParams {
        self.hyperparams.unwrap_or(HyperParams::DEFAULT)
    }

    /// Canonical string, used as the landscape key and for hashing.
    /// `debug_fixed` is not part of it.
    pub fn key(&self) -> String {
        let mut s = format!("{}/{}", self.paradigm.name(), self.backbone.name());
        if let Some(hp) = &self.hyperparams {
            s.push_str(&format!("/hp({hp})"));
        }
        if self.loss == LossKind::Huber {
            s.push_str("/huber");
        }
        s
    }

    /// Applies actions in order, starting from the paradigm's defaults.
    /// Debug is accepted and sets `debug_fixed`.
    pub fn from_actions(actions: &[Action]) -> Result<Self, SearchError> {
        let Some(Action::Paradigm(p)) = actions.first() else {
            return Err(SearchError::InvalidAction("an action path must start with a paradigm".into()));
        };
        let mut c = Candidate::new(*p, p.default_backbone(), None, LossKind::Mse)?;
        for a in &actions[1..] {
            c = c.apply(a)?;
        }
        Ok(c)
    }

    pub fn apply(&self, action: &Action) -> Result<Self, SearchError> {
        let mut c = *self;
        match action {
            Action::Paradigm(_) => {
                return Err(SearchError::InvalidAction("paradigm can only be chosen at the root".into()))
            }
            Action::Backbone(b) => {
                Candidate::new(self.paradigm, *b, None, self.loss)?;
                c.backbone = *b;
            }
            Action::Refinement(Refinement::Hyperparam(hp)) => {
                hp.validate()?;
                c.hyperparams = Some(*hp);
            }
            Action::Refinement(Refinement::Loss(l)) => c.loss = *l,
            Action::Debug => c.debug_fixed = true,
        }
        Ok(c)
    }

    /// Shortest hierarchy-legal action path denoting this candidate.
    pub fn action_path(&self) -> Vec<Action> {
        let mut path = vec![Action::Paradigm(self.paradigm), Action::Backbone(self.backbone)];
        if let Some(hp) = self.hyperparams {
            path.push(Action::Refinement(Refinement::Hyperparam(hp)));
        }
        if self.loss == LossKind::Huber {
            path.push(Action::Refinement(Refinement::Loss(LossKind::Huber)));
        }
        path
    }

    /// Every candidate reachable with the grid proposer, in canonical order:
    /// paradigm, backbone, then no-hyperparam before grid points, MSE before Huber.
    pub fn enumerate_grid() -> Vec<Candidate> {
        let mut out = Vec::new();
        for p in Paradigm::ALL {
            for &b in p.backbones() {
                for hp in std::iter::once(None).chain(HyperParams::GRID.iter().copied().map(Some)) {
                    for loss in [LossKind::Mse, LossKind::Huber] {
                        out.push(Candidate { paradigm: p, backbone: b, hyperparams: hp, loss, debug_fixed: false });
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())?;
        if self.debug_fixed {
            f.write_str(" [debug-fixed]")?;
        }
        Ok(())
    }
}

impl FromStr for Candidate {
    type Err = SearchError;

    /// Parses the canonical key form produced by [`Candidate::key`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| SearchError::InvalidAction(format!("bad candidate key '{s}': {why}"));
        let mut rest = s;
        let mut loss = LossKind::Mse;
        if let Some(r) = rest.strip_suffix("/huber") {
            rest = r;
            loss = LossKind::Huber;
        }
        let mut hyperparams = None;
        if let Some(start) = rest.find("/hp(") {
            let inner = rest[start + 4..].strip_suffix(')').ok_or_else(|| bad("unclosed hp("))?;
            hyperparams = Some(inner.parse()?);
            rest = &rest[..start];
        }
        let (p, b) = rest.split_once('/').ok_or_else(|| bad("expected paradigm/backbone"))?;
        let paradigm = Paradigm::ALL.into_iter().find(|x| x.name() == p).ok_or_else(|| bad("unknown paradigm"))?;
        let backbone = Backbone::ALL.into_iter().find(|x| x.name() == b).ok_or_else(|| bad("unknown backbone"))?;
        Candidate::new(paradigm, backbone, hyperparams, loss)
    }
}

/// Checks that a stored path obeys the hierarchy: one paradigm, one legal
/// backbone, then at most two refinements of distinct kinds. Debug is not
/// allowed in stored paths.
pub fn validate_action_path(path: &[Action]) -> Result<Candidate, SearchError> {
    let bad = |why: String| Err(SearchError::InvalidAction(why));
    let (Some(Action::Paradigm(p)), Some(Action::Backbone(b))) = (path.first(), path.get(1)) else {
        return bad("path must start with a paradigm followed by a backbone".into());
    };
    if b.paradigm() != *p {
        return bad(format!("backbone {} is not available under paradigm {}", b.name(), p.name()));
    }
    let mut seen_hp = false;
    let mut seen_loss = false;
    for a in &path[2..] {
        match a {
            Action::Refinement(Refinement::Hyperparam(_)) if !seen_hp => seen_hp = true,
            Action::Refinement(Refinement::Loss(_)) if !seen_loss => seen_loss = true,
            other => return bad(format!("action {other} is not allowed at this position")),
        }
    }
    Candidate::from_actions(path)
}
