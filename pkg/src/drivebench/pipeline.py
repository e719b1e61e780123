"""Three-stage prompting per frame: scene -> intent -> commands.

Each stage's output is threaded into the next stage's prompt; the image
is attached to all three calls since every call is stateless. Exactly
three provider calls are made per frame whatever the parse outcome;
parse failures are recorded as data, never retried.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ProviderError, TemplateError
from .kinematics import IntegratorConfig, integrate
from .parsing import parse_actions
from .providers import ChatRequest, Provider
from .records import ActionState, Frame, FrameResult

STAGE_PLACEHOLDERS = (
    frozenset(),
    frozenset({"scene_description", "history"}),
    frozenset({"scene_description", "intent"}),
)

DEFAULT_TEMPLATE_FILES = (
    "stage1_scene.txt",
    "stage2_intent.txt",
    "stage3_commands.txt",
)

_MEDIA_TYPES = {
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".png": "image/png",
}


@dataclass(frozen=True)
class PromptTemplates:
    stage1: str
    stage2: str
    stage3: str
    pair_format: str = "({speed:.2f}, {curvature:.4f})"

    def __post_init__(self):
        for i, text in enumerate((self.stage1, self.stage2, self.stage3)):
            found = _placeholders(text)
            expected = STAGE_PLACEHOLDERS[i]
            if found != expected:
                raise TemplateError(
                    f"stage {i + 1} template placeholders {sorted(found)} "
                    f"!= expected {sorted(expected)}"
                )


def _placeholders(template: str) -> frozenset[str]:
    names = set()
    try:
        for _, name, _, _ in string.Formatter().parse(template):
            if name is not None:
                if not name or not name.isidentifier():
                    raise TemplateError(f"bad placeholder {name!r}")
                names.add(name)
    except ValueError as exc:
        raise TemplateError(f"unbalanced braces: {exc}") from exc
    return frozenset(names)


def default_templates() -> PromptTemplates:
    texts = []
    base = resources.files("drivebench") / "templates"
    for name in DEFAULT_TEMPLATE_FILES:
        texts.append((base / name).read_text(encoding="utf-8"))
    return PromptTemplates(stage1=texts[0], stage2=texts[1], stage3=texts[2])


def load_templates(paths) -> PromptTemplates:
    """Read the three stage templates from plain-text files."""
    paths = list(paths)
    if len(paths) != 3:
        raise TemplateError(f"expected 3 template paths, got {len(paths)}")
    texts = [Path(p).read_text(encoding="utf-8") for p in paths]
    return PromptTemplates(stage1=texts[0], stage2=texts[1], stage3=texts[2])


def format_history(history, pair_format: str = "({speed:.2f}, {curvature:.4f})") -> str:
    """Render actions oldest to newest as "[(v1, k1), ..., (v6, k6)]"."""
    return (
        "["
        + ", ".join(
            pair_format.format(speed=a.speed, curvature=a.curvature) for a in history
        )
        + "]"
    )


def media_type_for(path: str) -> str:
    return _MEDIA_TYPES.get(Path(path).suffix.lower(), "application/octet-stream")


def run_frame(
    frame: Frame,
    provider: Provider,
    templates: PromptTemplates,
    image_root: Path | str = ".",
    integrator: IntegratorConfig = IntegratorConfig(),
    max_output_tokens: int = 2048,
    temperature: float | None = None,
) -> FrameResult:
    image_file = Path(image_root) / frame.image_path
    try:
        image = (image_file.read_bytes(), media_type_for(frame.image_path))
    except OSError:
        return _aborted_result(frame, [], "unreadable-image")

    texts: list[str] = []
    usage: list[tuple[int, int]] = []
    latencies: list[float] = []

    for stage in (1, 2, 3):
        if stage == 1:
            prompt = templates.stage1
        elif stage == 2:
            prompt = templates.stage2.format(
                scene_description=texts[0],
                history=format_history(frame.history, templates.pair_format),
            )
        else:
            prompt = templates.stage3.format(
                scene_description=texts[0], intent=texts[1]
            )
        request = ChatRequest(
            user_text=prompt,
            image=image,
            max_output_tokens=max_output_tokens,
            temperature=temperature,
            tags={"frame_id": frame.frame_id, "stage": str(stage)},
        )
        try:
            response = provider.send(request)
        except ProviderError:
            return _aborted_result(
                frame, list(zip(texts, usage, latencies)), "transport"
            )
        texts.append(response.text)
        usage.append((response.input_tokens, response.output_tokens))
        latencies.append(response.latency_s)

    outcome = parse_actions(texts[2])
    actions: tuple[ActionState, ...] | None = None
    predicted = None
    if outcome.status != "failed":
        actions = outcome.actions
        predicted = integrate(actions, integrator)
    return FrameResult(
        frame_id=frame.frame_id,
        stage_texts=(texts[0], texts[1], texts[2]),
        parse_status=outcome.status,
        usage=(usage[0], usage[1], usage[2]),
        latency_stages=(latencies[0], latencies[1], latencies[2]),
        latency_total=sum(latencies),
        actions=actions,
        predicted=predicted,
        error_class=outcome.error_class,
    )


def _aborted_result(frame: Frame, completed, error_class: str) -> FrameResult:
    """Result shell for frames that never reached a parseable stage 3."""
    texts = [t for t, _, _ in completed]
    usage = [u for _, u, _ in completed]
    latencies = [lat for _, _, lat in completed]
    while len(texts) < 3:
        texts.append("")
        usage.append((0, 0))
        latencies.append(0.0)
    return FrameResult(
        frame_id=frame.frame_id,
        stage_texts=(texts[0], texts[1], texts[2]),
        parse_status="failed",
        usage=(usage[0], usage[1], usage[2]),
        latency_stages=(latencies[0], latencies[1], latencies[2]),
        latency_total=sum(latencies),
        error_class=error_class,
    )
