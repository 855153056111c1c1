from .policy import ObservationEncoders, PolicyNet, act, obs_to_tensors
from .ppo import PPOConfig, RolloutBuffer, compute_gae, ppo_update
from .baselines import SCRIPTED_KINDS, NoveltyCounter, ScriptedAgent, novelty_reward
from .joint import JointConfig, collect_episode, compute_reward, joint_train, memory_update
