"""Command-line surface binding the pipeline together.

Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import kg as kgmod
from .config import RunConfig
from .env import make_env_factory
from .errors import ConfigError, KgAgentError
from .evalmetrics import error_report, classify_error, path_coverage, render_error_report, score_trajectories
from .policy import HttpPolicy, HttpPolicyConfig, QuestionScriptedPolicy, ReplayPolicy
from .questions import load_questions
from .retriever import CorpusRetriever, load_corpus
from .rules import RulePlanner, mine_rule_bodies, save_demonstrations
from .selflearn import explore, iterate, replay_train_step
from .templates import TemplateSet
from .trajectory import load_trajectories, save_trajectories

logger = logging.getLogger(__name__)


def _config(ctx: click.Context, **overrides) -> RunConfig:
    return RunConfig.load(ctx.obj.get("config_path"), overrides)


def _load_policy(config: RunConfig):
    if config.policy == "scripted":
        if not config.script:
            raise ConfigError("scripted policy needs --script")
        scripts = {}
        with open(config.script, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    record = json.loads(line)
                    scripts[record["question"]] = record["outputs"]
        return QuestionScriptedPolicy(scripts)
    if config.policy == "replay":
        if not config.replay_store:
            raise ConfigError("replay policy needs --replay-store")
        store = {}
        for trajectory in load_trajectories(config.replay_store):
            known = store.get(trajectory.question)
            if known is None or trajectory.reward > known.reward:
                store[trajectory.question] = trajectory
        return ReplayPolicy(store)
    if not config.policy_config:
        raise ConfigError("http policy needs --policy-config")
    return HttpPolicy(HttpPolicyConfig.from_file(config.policy_config))


def _build_env_factory(config: RunConfig, graph, templates: TemplateSet):
    retriever = None
    if config.corpus:
        retriever = CorpusRetriever(load_corpus(config.corpus))
    planner = None
    if config.train_questions:
        planner = RulePlanner(
            load_questions(config.train_questions),
            graph,
            templates.text("planner"),
            k=config.k,
            m=config.m,
            max_len=config.max_len,
        )
    return make_env_factory(
        graph,
        templates,
        planner=planner,
        retriever=retriever,
        max_steps=config.max_steps,
        list_limit=config.list_limit,
        top_docs=config.top_docs,
    )


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file of defaults; flags override it.")
@click.option("--log-level", default="WARNING", show_default=True)
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, log_level: str) -> None:
    """Knowledge-graph reasoning agent pipeline."""
    logging.basicConfig(level=getattr(logging, log_level.upper(), logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s %(message)s")
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


@cli.command("build-kg")
@click.option("--kg", required=True, type=click.Path(exists=True))
@click.option("--out-dir", default=None)
@click.pass_context
def build_kg(ctx, kg, out_dir):
    """Load and index a KG TSV; write stats and the canonical TSV."""
    config = _config(ctx, kg=kg, out_dir=out_dir)
    config.validate(require=("kg",))
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph = kgmod.load_kg(config.kg)
    kgmod.save_kg(graph, out / "kg.tsv")
    stats = {
        "triples": graph.num_triples,
        "entities": graph.num_entities,
        "relations": graph.num_relations,
        "fingerprint": graph.fingerprint(),
    }
    (out / "kg_stats.json").write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    click.echo(json.dumps(stats))


@cli.command("make-incomplete")
@click.option("--kg", required=True, type=click.Path(exists=True))
@click.option("--questions", required=True, type=click.Path(exists=True))
@click.option("--ratio", "removal_ratio", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--max-len", "max_len", type=int, default=None)
@click.option("--out-dir", default=None)
@click.pass_context
def make_incomplete(ctx, kg, questions, removal_ratio, seed, max_len, out_dir):
    """Remove a seeded share of question-path triples from the KG."""
    config = _config(ctx, kg=kg, questions=questions, removal_ratio=removal_ratio,
                     seed=seed, max_len=max_len, out_dir=out_dir)
    config.validate(require=("kg", "questions"))
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph = kgmod.load_kg(config.kg)
    degraded, removed = kgmod.construct_incomplete_kg(
        graph, load_questions(config.questions), config.removal_ratio, config.seed,
        max_len=config.max_len,
    )
    kgmod.save_kg(degraded, out / "kg_incomplete.tsv")
    kgmod.save_triples(removed, out / "removed_triples.tsv")
    click.echo(json.dumps({"removed": len(removed), "remaining": degraded.num_triples}))


@cli.command("mine-rules")
@click.option("--kg", required=True, type=click.Path(exists=True))
@click.option("--questions", required=True, type=click.Path(exists=True))
@click.option("--m", type=int, default=None)
@click.option("--max-len", "max_len", type=int, default=None)
@click.option("--out-dir", default=None)
@click.pass_context
def mine_rules(ctx, kg, questions, m, max_len, out_dir):
    """Mine generalized rule bodies for every question's gold paths."""
    config = _config(ctx, kg=kg, questions=questions, m=m, max_len=max_len, out_dir=out_dir)
    config.validate(require=("kg", "questions"))
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph = kgmod.load_kg(config.kg)
    rows = []
    for question in load_questions(config.questions):
        rows.append((question, mine_rule_bodies(graph, question, m=config.m, max_len=config.max_len)))
    count = save_demonstrations(rows, out / "rules.jsonl")
    click.echo(json.dumps({"questions": count}))


@cli.command("run-agent")
@click.option("--kg", required=True, type=click.Path(exists=True))
@click.option("--questions", required=True, type=click.Path(exists=True))
@click.option("--policy", type=click.Choice(["scripted", "replay", "http"]), default=None)
@click.option("--script", type=click.Path(exists=True), default=None)
@click.option("--replay-store", type=click.Path(exists=True), default=None)
@click.option("--policy-config", type=click.Path(exists=True), default=None)
@click.option("--corpus", type=click.Path(exists=True), default=None)
@click.option("--train-questions", type=click.Path(exists=True), default=None)
@click.option("--templates", type=click.Path(exists=True), default=None)
@click.option("--plan-first", is_flag=True, default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--concurrency", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", default=None)
@click.pass_context
def run_agent(ctx, kg, questions, policy, script, replay_store, policy_config, corpus,
              train_questions, templates, plan_first, max_steps, concurrency, seed, out_dir):
    """Run one episode per question and score the outcomes."""
    config = _config(ctx, kg=kg, questions=questions, policy=policy, script=script,
                     replay_store=replay_store, policy_config=policy_config, corpus=corpus,
                     train_questions=train_questions, templates=templates,
                     plan_first=plan_first, max_steps=max_steps, concurrency=concurrency,
                     seed=seed, out_dir=out_dir)
    config.validate(require=("kg", "questions"))
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph = kgmod.load_kg(config.kg)
    template_set = TemplateSet(config.templates or None)
    env_factory = _build_env_factory(config, graph, template_set)
    question_list = load_questions(config.questions)
    result = explore(_load_policy(config), env_factory, question_list,
                     concurrency=config.concurrency, plan_first=config.plan_first)
    trajectories = [r.trajectory for r in result.rewarded]
    save_trajectories(trajectories, out / "trajectories.jsonl")
    extracted: list[tuple[str, str, str]] = []
    seen = set()
    for r in result.rewarded:
        for row in r.trajectory.extracted:
            if row not in seen:
                seen.add(row)
                extracted.append(row)
    kgmod.save_triples(extracted, out / "extracted_triples.tsv")
    metrics = score_trajectories(trajectories, question_list)
    metrics.save_json(out / "metrics.json")
    metrics.save_csv(out / "per_question.csv")
    mean_reward = result.mean_reward
    click.echo(json.dumps({
        "episodes": len(trajectories),
        "failures": len(result.failures),
        "mean_reward": mean_reward,
        "hits1": metrics.hits1,
    }))


@cli.command("selflearn")
@click.option("--kg", required=True, type=click.Path(exists=True))
@click.option("--questions", required=True, type=click.Path(exists=True))
@click.option("--validation-questions", type=click.Path(exists=True), default=None)
@click.option("--policy", type=click.Choice(["scripted", "replay", "http"]), default=None)
@click.option("--script", type=click.Path(exists=True), default=None)
@click.option("--replay-store", type=click.Path(exists=True), default=None)
@click.option("--policy-config", type=click.Path(exists=True), default=None)
@click.option("--corpus", type=click.Path(exists=True), default=None)
@click.option("--train-questions", type=click.Path(exists=True), default=None)
@click.option("--templates", type=click.Path(exists=True), default=None)
@click.option("--plan-first", is_flag=True, default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--epsilon", "epsilon_points", type=float, default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--concurrency", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", default=None)
@click.pass_context
def selflearn_cmd(ctx, kg, questions, validation_questions, policy, script, replay_store,
                  policy_config, corpus, train_questions, templates, plan_first, iterations,
                  epsilon_points, max_steps, concurrency, seed, out_dir):
    """Iterative explore/refine/merge/emit/train loop (replay train step)."""
    config = _config(ctx, kg=kg, questions=questions, validation_questions=validation_questions,
                     policy=policy, script=script, replay_store=replay_store,
                     policy_config=policy_config, corpus=corpus, train_questions=train_questions,
                     templates=templates, plan_first=plan_first, iterations=iterations,
                     epsilon_points=epsilon_points, max_steps=max_steps,
                     concurrency=concurrency, seed=seed, out_dir=out_dir)
    config.validate(require=("kg", "questions"))
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph = kgmod.load_kg(config.kg)
    template_set = TemplateSet(config.templates or None)
    env_factory = _build_env_factory(config, graph, template_set)
    question_list = load_questions(config.questions)
    validation = load_questions(config.validation_questions) if config.validation_questions else []
    report = iterate(
        _load_policy(config), env_factory, question_list, validation,
        replay_train_step(), template_set, out,
        iterations=config.iterations, epsilon_points=config.epsilon_points,
        concurrency=config.concurrency, plan_first=config.plan_first,
    )
    (out / "iteration_report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    click.echo(json.dumps({"iterations": len(report["iterations"]), "stopped": report["stopped"]}))


@cli.command("evaluate")
@click.option("--trajectories", required=True, type=click.Path(exists=True))
@click.option("--questions", required=True, type=click.Path(exists=True))
@click.option("--kg", type=click.Path(exists=True), default=None, help="Enables path coverage.")
@click.option("--max-len", "max_len", type=int, default=None)
@click.option("--out-dir", default=None)
@click.pass_context
def evaluate(ctx, trajectories, questions, kg, max_len, out_dir):
    """Score stored trajectories and break down the failures."""
    config = _config(ctx, questions=questions, kg=kg or "", max_len=max_len, out_dir=out_dir)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trajectory_list = load_trajectories(trajectories)
    question_list = load_questions(config.questions)
    metrics = score_trajectories(trajectory_list, question_list)
    metrics.save_json(out / "metrics.json")
    metrics.save_csv(out / "per_question.csv")
    failures = [t for t in trajectory_list if classify_error(t) != "OK"]
    shares = error_report(failures)
    (out / "error_report.tsv").write_text(render_error_report(shares), encoding="utf-8")
    payload = {"hits1": metrics.hits1, "accuracy": metrics.accuracy, "f1": metrics.f1,
               "failures": len(failures), "error_shares": shares}
    if config.kg:
        graph = kgmod.load_kg(config.kg)
        coverage, _rows = path_coverage(graph, question_list, max_len=config.max_len)
        payload["path_coverage"] = coverage
    click.echo(json.dumps(payload))


@cli.command("commit-triples")
@click.option("--kg", required=True, type=click.Path(exists=True))
@click.option("--triples", required=True, type=click.Path(exists=True))
@click.option("--out-dir", default=None)
@click.pass_context
def commit_triples_cmd(ctx, kg, triples, out_dir):
    """Merge extracted triples into the KG and write the augmented TSV."""
    config = _config(ctx, kg=kg, out_dir=out_dir)
    config.validate(require=("kg",))
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph = kgmod.load_kg(config.kg)
    added = kgmod.commit_triples(graph, kgmod.load_triples(triples))
    kgmod.save_kg(graph, out / "kg_augmented.tsv")
    click.echo(json.dumps({"added": added, "triples": graph.num_triples}))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False, obj={})
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except (ConfigError, click.ClickException) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except KgAgentError as exc:
        click.echo(f"runtime error: {exc}", err=True)
        return 2
    except Exception as exc:  # pragma: no cover - last resort
        logger.exception("unhandled failure")
        click.echo(f"runtime error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
