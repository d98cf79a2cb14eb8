"""Knowledge-graph reasoning agent: rule-guided planning, tool-calling
episodes over a graph environment, and self-learning trajectory synthesis."""

from .actions import Action, ActionParseFailure, parse_action
from .bm25 import Bm25Index, bm25_build, bm25_retrieve
from .env import AgentEnv, Observation, make_env_factory, run_episode
from .kg import (
    ClosedPath,
    KnowledgeGraph,
    Triple,
    commit_triples,
    construct_incomplete_kg,
    load_kg,
    save_kg,
)
from .policy import (
    ChatMessage,
    HttpPolicy,
    HttpPolicyConfig,
    PolicyContext,
    QuestionScriptedPolicy,
    ReplayPolicy,
    ScriptedPolicy,
    build_agent_prompt,
    parse_react,
    replay_policy,
    scripted_policy,
)
from .questions import Question, load_questions, save_questions
from .rules import (
    Demonstration,
    RuleBody,
    RulePlanner,
    assemble_planner_prompt,
    build_demonstrations,
    generalize,
    parse_rule_bodies,
)
from .selflearn import (
    MergedSet,
    RewardedTrajectory,
    compute_reward,
    emit_sft,
    explore,
    iterate,
    merge,
    refine,
    replay_train_step,
)
from .evalmetrics import classify_error, error_report, path_coverage, score_question
from .templates import TemplateSet
from .trajectory import Trajectory, TrajectoryStep, load_trajectories, save_trajectories

__version__ = "0.1.0"
