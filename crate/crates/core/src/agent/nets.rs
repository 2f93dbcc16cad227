//! Policy and distributional critic networks plus the D4PG update.

use rand::Rng;

use crate::distributional::{atom_values, critic_loss_and_grad, project, softmax, SupportSpec, ValueDistribution};
use crate::env::{Observation, ACTION_DIM, IMAGE_CHANNELS};
use crate::net::{adam_step, backward, backward_params, forward, predict, AdamState, LayerSpec, NetworkParams, NetworkSpec, Tensor};
use crate::replay::Action;

use super::AgentError;

/// Width of the dense layers and of the critic feature vector.
pub const HIDDEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetVariant {
    /// One 4-channel conv layer, no normalization.
    Small,
    /// Two conv layers (8 and 16 channels), two dense layers with LayerNorm.
    Large,
}

impl NetVariant {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "small" => Some(Self::Small),
            "large" => Some(Self::Large),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Small => "small",
            Self::Large => "large",
        }
    }
}

/// Everything that fixes the network shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetShape {
    pub variant: NetVariant,
    pub instance_norm: bool,
    /// Identity skips around weight layers that keep their width.
    pub residual: bool,
    pub grid: usize,
    /// Whether a goal image is stacked onto the observation image.
    pub goal_conditioned: bool,
}

impl NetShape {
    pub fn input_channels(&self) -> usize {
        if self.goal_conditioned {
            2 * IMAGE_CHANNELS
        } else {
            IMAGE_CHANNELS
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        vec![self.input_channels(), self.grid, self.grid]
    }

    /// Conv stack and first dense layer, ending in `HIDDEN` activated features.
    fn trunk_layers(&self) -> Vec<LayerSpec> {
        let c = self.input_channels();
        let g = self.grid;
        match self.variant {
            NetVariant::Small => vec![
                LayerSpec::conv(c, 4, 3, 1),
                LayerSpec::Elu,
                LayerSpec::dense(4 * (g - 2) * (g - 2), HIDDEN),
                LayerSpec::Elu,
            ],
            NetVariant::Large => {
                let mut layers = vec![LayerSpec::conv(c, 8, 3, 1)];
                if self.instance_norm {
                    layers.push(LayerSpec::InstanceNorm { channels: 8 });
                }
                layers.push(LayerSpec::Elu);
                layers.push(LayerSpec::conv(8, 16, 3, 1));
                if self.instance_norm {
                    layers.push(LayerSpec::InstanceNorm { channels: 16 });
                }
                layers.push(LayerSpec::Elu);
                layers.push(LayerSpec::dense(16 * (g - 4) * (g - 4), HIDDEN));
                layers.push(LayerSpec::LayerNorm { width: HIDDEN });
                layers.push(LayerSpec::Elu);
                layers
            }
        }
    }

    pub fn policy_spec(&self) -> NetworkSpec {
        let mut layers = self.trunk_layers();
        if self.variant == NetVariant::Large {
            layers.extend([LayerSpec::dense(HIDDEN, HIDDEN), LayerSpec::LayerNorm { width: HIDDEN }, LayerSpec::Elu]);
        }
        layers.extend([LayerSpec::dense(HIDDEN, ACTION_DIM), LayerSpec::Tanh]);
        self.finish(NetworkSpec::new(self.input_shape(), layers))
    }

    fn finish(&self, spec: NetworkSpec) -> NetworkSpec {
        NetworkSpec { residual: self.residual, ..spec }
    }

    pub fn critic_trunk_spec(&self) -> NetworkSpec {
        self.finish(NetworkSpec::new(self.input_shape(), self.trunk_layers()))
    }

    /// Maps `[features, action]` to atom logits.
    pub fn critic_head_spec(&self, n_bins: usize) -> NetworkSpec {
        let mut layers = vec![LayerSpec::dense(HIDDEN + ACTION_DIM, HIDDEN)];
        if self.variant == NetVariant::Large {
            layers.push(LayerSpec::LayerNorm { width: HIDDEN });
        }
        layers.extend([LayerSpec::Elu, LayerSpec::dense(HIDDEN, n_bins)]);
        self.finish(NetworkSpec::new(vec![HIDDEN + ACTION_DIM], layers))
    }
}

/// Network input built from observation images only. Body features are never used.
pub fn policy_input(obs: &Observation, goal: Option<&Observation>) -> Tensor {
    let g = obs.grid;
    let data = match goal {
        Some(goal) => [obs.image.as_slice(), goal.image.as_slice()].concat(),
        None => obs.image.clone(),
    };
    let channels = data.len() / (g * g);
    Tensor::new(vec![channels, g, g], data).expect("observation images are finite")
}

fn with_action(features: &Tensor, action: &[f64]) -> Tensor {
    Tensor::vector([features.data(), action].concat())
}

/// Learning-rate and schedule settings of one learner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnerSettings {
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub preact_penalty: f64,
    pub target_update_period: u64,
}

/// One replay sample in network-ready form.
#[derive(Clone, Debug)]
pub struct LearnSample {
    pub input: Tensor,
    pub action: Action,
    pub reward: f64,
    pub discount: f64,
    pub next_input: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateReport {
    pub critic_loss: f64,
    /// Mean critic value at the policy's own actions.
    pub policy_objective: f64,
    pub per_sample_loss: Vec<f64>,
    /// Non-finite loss or gradient; parameters were left untouched.
    pub skipped: bool,
}

/// Online and target networks with optimizer state for one policy/critic pair.
#[derive(Clone, Debug)]
pub struct AgentNets {
    pub shape: NetShape,
    pub support: SupportSpec,
    atoms: Vec<f64>,
    pub policy_spec: NetworkSpec,
    pub trunk_spec: NetworkSpec,
    pub head_spec: NetworkSpec,
    pub policy: NetworkParams,
    pub trunk: NetworkParams,
    pub head: NetworkParams,
    pub target_policy: NetworkParams,
    pub target_trunk: NetworkParams,
    pub target_head: NetworkParams,
    policy_opt: AdamState,
    trunk_opt: AdamState,
    head_opt: AdamState,
    pub settings: LearnerSettings,
    pub steps: u64,
    pub skipped_steps: u64,
}

impl AgentNets {
    pub fn new<R: Rng + ?Sized>(shape: NetShape, support: SupportSpec, settings: LearnerSettings, rng: &mut R) -> Result<Self, AgentError> {
        let policy_spec = shape.policy_spec();
        let trunk_spec = shape.critic_trunk_spec();
        let head_spec = shape.critic_head_spec(support.n_bins());
        let policy = NetworkParams::init(&policy_spec, rng)?;
        let trunk = NetworkParams::init(&trunk_spec, rng)?;
        let head = NetworkParams::init(&head_spec, rng)?;
        Self::from_params(shape, support, settings, policy, trunk, head)
    }

    pub fn from_params(
        shape: NetShape,
        support: SupportSpec,
        settings: LearnerSettings,
        policy: NetworkParams,
        trunk: NetworkParams,
        head: NetworkParams,
    ) -> Result<Self, AgentError> {
        let policy_spec = shape.policy_spec();
        let trunk_spec = shape.critic_trunk_spec();
        let head_spec = shape.critic_head_spec(support.n_bins());
        policy.check_matches(&policy_spec.layers)?;
        trunk.check_matches(&trunk_spec.layers)?;
        head.check_matches(&head_spec.layers)?;
        Ok(Self {
            shape,
            support,
            atoms: atom_values(&support),
            policy_opt: AdamState::new(&policy, settings.policy_lr),
            trunk_opt: AdamState::new(&trunk, settings.critic_lr),
            head_opt: AdamState::new(&head, settings.critic_lr),
            target_policy: policy.clone(),
            target_trunk: trunk.clone(),
            target_head: head.clone(),
            policy_spec,
            trunk_spec,
            head_spec,
            policy,
            trunk,
            head,
            settings,
            steps: 0,
            skipped_steps: 0,
        })
    }

    pub fn act(&self, obs: &Observation, goal: Option<&Observation>) -> Result<Action, AgentError> {
        act_with(&self.policy_spec, &self.policy, obs, goal)
    }

    fn critic_logits(&self, input: &Tensor, action: &[f64]) -> Result<Vec<f64>, AgentError> {
        let features = predict(&self.trunk_spec, &self.trunk, input)?;
        Ok(predict(&self.head_spec, &self.head, &with_action(&features, action))?.into_data())
    }

    /// Expected value of the online critic.
    pub fn q_value(&self, input: &Tensor, action: &[f64]) -> Result<f64, AgentError> {
        let probs = softmax(&self.critic_logits(input, action)?);
        Ok(probs.iter().zip(&self.atoms).map(|(p, z)| p * z).sum())
    }

    /// Gradient of the online critic's expected value with respect to the action.
    pub fn action_gradient(&self, input: &Tensor, action: &[f64]) -> Result<Action, AgentError> {
        let features = predict(&self.trunk_spec, &self.trunk, input)?;
        let (_, grad) = self.value_and_action_grad(&features, action)?;
        Ok(grad)
    }

    fn value_and_action_grad(&self, features: &Tensor, action: &[f64]) -> Result<(f64, Action), AgentError> {
        let (logits, cache) = forward(&self.head_spec, &self.head, &with_action(features, action))?;
        let probs = softmax(logits.data());
        let q: f64 = probs.iter().zip(&self.atoms).map(|(p, z)| p * z).sum();
        let dlogits: Vec<f64> = probs.iter().zip(&self.atoms).map(|(p, z)| p * (z - q)).collect();
        let (_, dx) = backward(&self.head_spec, &self.head, &cache, &Tensor::vector(dlogits))?;
        let mut grad = [0.0; ACTION_DIM];
        grad.copy_from_slice(&dx.data()[HIDDEN..]);
        Ok((q, grad))
    }

    /// Projected N-step target distribution from the target networks.
    pub fn target_distribution(&self, sample: &LearnSample) -> Result<ValueDistribution, AgentError> {
        if sample.discount == 0.0 {
            return Ok(project(&self.support, &[sample.reward], &[1.0])?);
        }
        let next_action = predict(&self.policy_spec, &self.target_policy, &sample.next_input)?;
        let features = predict(&self.trunk_spec, &self.target_trunk, &sample.next_input)?;
        let logits = predict(&self.head_spec, &self.target_head, &with_action(&features, next_action.data()))?;
        let probs = softmax(logits.data());
        let values: Vec<f64> = self.atoms.iter().map(|z| sample.reward + sample.discount * z).collect();
        Ok(project(&self.support, &values, &probs)?)
    }

    /// One critic and policy step on a minibatch, then a target sync when due.
    pub fn update(&mut self, batch: &[LearnSample]) -> Result<UpdateReport, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        let inv_b = 1.0 / batch.len() as f64;
        let q_scale = 1.0 / (self.support.v_max() - self.support.v_min());
        let penalty = self.settings.preact_penalty;
        let mut g_trunk = self.trunk.zeros_like();
        let mut g_head = self.head.zeros_like();
        let mut g_policy = self.policy.zeros_like();
        let mut losses = Vec::with_capacity(batch.len());
        let mut objective = 0.0;

        for sample in batch {
            let target = self.target_distribution(sample)?;
            let (features, trunk_cache) = forward(&self.trunk_spec, &self.trunk, &sample.input)?;
            let (logits, head_cache) = forward(&self.head_spec, &self.head, &with_action(&features, &sample.action))?;
            let (loss, dlogits) = critic_loss_and_grad(&target, logits.data())?;
            losses.push(loss);
            let dlogits = Tensor::vector(dlogits.iter().map(|g| g * inv_b).collect());
            let (gh, dhead_in) = backward(&self.head_spec, &self.head, &head_cache, &dlogits)?;
            g_head.accumulate(&gh);
            let dfeatures = Tensor::vector(dhead_in.data()[..HIDDEN].to_vec());
            g_trunk.accumulate(&backward_params(&self.trunk_spec, &self.trunk, &trunk_cache, &dfeatures)?);

            let (action, policy_cache) = forward(&self.policy_spec, &self.policy, &sample.input)?;
            let (q, dq_da) = self.value_and_action_grad(&features, action.data())?;
            objective += q;
            // Policy loss: -Q / width + penalty * |u|^2 with action = tanh(u).
            let dpolicy = Tensor::vector(dq_da.iter().zip(action.data()).map(|(g, a)| (-g * q_scale + preact_grad(*a, penalty)) * inv_b).collect());
            g_policy.accumulate(&backward_params(&self.policy_spec, &self.policy, &policy_cache, &dpolicy)?);
        }

        let critic_loss = losses.iter().sum::<f64>() * inv_b;
        let finite = critic_loss.is_finite()
            && g_trunk.first_non_finite_layer().is_none()
            && g_head.first_non_finite_layer().is_none()
            && g_policy.first_non_finite_layer().is_none();
        self.steps += 1;
        if !finite {
            self.skipped_steps += 1;
            return Ok(UpdateReport { critic_loss, policy_objective: objective * inv_b, per_sample_loss: losses, skipped: true });
        }
        adam_step(&mut self.trunk, &g_trunk, &mut self.trunk_opt)?;
        adam_step(&mut self.head, &g_head, &mut self.head_opt)?;
        adam_step(&mut self.policy, &g_policy, &mut self.policy_opt)?;
        if self.settings.target_update_period > 0 && self.steps.is_multiple_of(self.settings.target_update_period) {
            self.sync_targets();
        }
        Ok(UpdateReport { critic_loss, policy_objective: objective * inv_b, per_sample_loss: losses, skipped: false })
    }

    pub fn sync_targets(&mut self) {
        self.target_policy = self.policy.clone();
        self.target_trunk = self.trunk.clone();
        self.target_head = self.head.clone();
    }
}

/// Derivative of `penalty * atanh(a)^2` with respect to `a`. Clamping keeps it finite;
/// after the Tanh backward pass it is `2 * penalty * u` for all but fully saturated outputs.
fn preact_grad(a: f64, penalty: f64) -> f64 {
    if penalty == 0.0 {
        return 0.0;
    }
    let a = a.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
    2.0 * penalty * a.atanh() / (1.0 - a * a)
}

pub fn act_with(spec: &NetworkSpec, params: &NetworkParams, obs: &Observation, goal: Option<&Observation>) -> Result<Action, AgentError> {
    let out = predict(spec, params, &policy_input(obs, goal))?;
    let mut a = [0.0; ACTION_DIM];
    a.copy_from_slice(out.data());
    Ok(a)
}
