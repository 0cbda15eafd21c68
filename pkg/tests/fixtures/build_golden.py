"""Regenerate the golden fixture corpus under tests/fixtures/golden/.

    python tests/fixtures/build_golden.py

The output is committed; tests read it and never rewrite it.
"""

from __future__ import annotations

import shutil
from pathlib import Path

HERE = Path(__file__).resolve().parent
GOLDEN = HERE / "golden"

PATHS = ["canvas", "forge", "nexus", "sentinel", "byop"]
FILES = [
    "01-setup.md", "02-blueprint.md", "03-rules-memory-context.md", "04-skills-commands.md",
    "05-hooks.md", "06-mcp-servers.md", "07-guard-rails.md", "08-subagents.md",
    "09-tasks-tdd.md", "10-parallel-plugins-eval.md",
]
TITLES = [
    "Setup & First Contact", "Blueprint & Build", "Rules, Memory & Context", "Skills & Commands",
    "Hooks", "MCP Servers", "Guard Rails", "Subagents", "Tasks & TDD", "Parallel Dev & Eval",
]
FEATURES = [
    "CLAUDE.md, /init, /memory, interactive mode, keyboard shortcuts",
    "Plan mode, git integration, basic prompting, model selection",
    ".claude/rules/, CLAUDE.local.md, @imports, /context, /compact",
    "SKILL.md, frontmatter, custom commands, hot-reload, argument substitution",
    "Hooks (SessionStart, PostToolUse, Stop), matchers, hook scripting",
    "MCP servers, .mcp.json, scopes, skills + MCP integration",
    "PreToolUse, hook decision control, prompt-based hooks",
    ".claude/agents/, subagent frontmatter, chaining, parallel, background",
    "Tasks system, dependencies, cross-session persistence, TDD loops",
    "Worktrees, agent teams, plugins, evaluation framework, continuous learning",
]
PERSONAS = ["Guide"] * 3 + ["Collaborator"] * 3 + ["Peer"] * 3 + ["Launcher"]
PERSONA_NOTES = {
    "Guide": 'Explain every concept before using it. "Let\'s try...", "Here\'s what that does..."',
    "Collaborator": 'Ask before answering, give pointers. "What if we...", "Try this and tell me..."',
    "Peer": 'Terse guidance, point to docs, let them debug first. "Your call", "What would you do here?"',
    "Launcher": 'State the goal and step back. "You\'ve got this", "Go build it."',
}
DOMAINS = {
    "canvas": "portfolio site",
    "forge": "dev toolkit CLI",
    "nexus": "API gateway",
    "sentinel": "code analyzer",
    "byop": "own project",
}
CONTEXT = [
    "agents.txt", "best-practices.txt", "checkpoints.txt", "claude-md.txt", "cli-reference.txt",
    "commands.txt", "compact.txt", "context-window.txt", "evaluation.txt", "git-integration.txt",
    "hooks.txt", "mcp.txt", "memory.txt", "models.txt", "permissions.txt", "plan-mode.txt",
    "plugins.txt", "rules.txt", "settings.txt", "skills.txt", "tasks.txt", "worktrees.txt",
]


def module_text(path: str, number: int) -> str:
    pidx = PATHS.index(path)
    title = TITLES[number - 1]
    persona = PERSONAS[number - 1]
    domain = DOMAINS[path]
    n_steps = 3 + (number + pidx) % 3
    out = [
        f"# Module {number}: {title}",
        "",
        f"**Persona -- {persona}:** {PERSONA_NOTES[persona]}",
        "",
        f"**CC features:** {FEATURES[number - 1]}",
        "",
        f"In this module you apply {title.lower()} to your {domain}.",
        "",
    ]
    for k in range(1, n_steps + 1):
        out += [
            f"## {number}.{k} {title} task {k}",
            "",
            f"Work through part {k} of {title.lower()} for the {domain}.",
            "Run the command, read the output, and describe what changed.",
            "",
        ]
        if k == 1:
            out += ["```bash", "# not a heading, just a shell comment", "git status", "```", ""]
        if k % 2 == 0:
            out += [
                f"**STOP -- What you just did:** You finished part {k} of {title.lower()}.",
                "Take a moment before moving on.",
                "",
            ]
    out += ["## Checkpoint", ""]
    out += [f"- [ ] Step {number}.{k} done for the {domain}" for k in range(1, n_steps + 1)]
    out.append("")
    return "\n".join(out)


def build(dest: Path = GOLDEN) -> None:
    if dest.exists():
        shutil.rmtree(dest)
    for path in PATHS:
        pdir = dest / "projects" / path
        pdir.mkdir(parents=True)
        (pdir / "README.md").write_text(f"# {path.title()}\n\nProject path: {DOMAINS[path]}.\n")
        for number, name in enumerate(FILES, start=1):
            (pdir / name).write_text(module_text(path, number), newline="")
    cdir = dest / "context"
    cdir.mkdir(parents=True)
    for name in CONTEXT:
        (cdir / name).write_text(f"Reference notes: {name[:-4].replace('-', ' ')}.\n")


if __name__ == "__main__":
    build()
