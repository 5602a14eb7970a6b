"""System and runtime prompt construction for caption generation."""
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

from langchain_core.prompts import ChatPromptTemplate

from core.models.main import ActionSegment
from core.prompts.caption_generation import caption_runtime_prompt, caption_system_prompt
from core.utils.error_handling import ConfigurationError, ValidationError


@dataclass(frozen=True)
class PromptTemplates:
    system: str = caption_system_prompt
    runtime: str = caption_runtime_prompt

    @classmethod
    def from_files(cls, system_path: Optional[str] = None, runtime_path: Optional[str] = None) -> "PromptTemplates":
        """Plain-text templates with {taxonomy} / {segments} placeholders; missing paths keep the defaults."""
        def read(path: Optional[str], fallback: str, placeholder: str) -> str:
            if not path:
                return fallback
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as e:
                raise ConfigurationError(f"Cannot read template {path}: {e}", field=path) from e
            if "{" + placeholder + "}" not in text:
                raise ConfigurationError(f"Template {path} lacks the {{{placeholder}}} placeholder", field=path)
            return text

        return cls(read(system_path, caption_system_prompt, "taxonomy"),
                   read(runtime_path, caption_runtime_prompt, "segments"))


def format_segment_line(segment: ActionSegment, fps: float) -> str:
    """`[t0 s – t1 s] action (confidence 0.xx)` plus alternatives when the segment carries them."""
    line = (f"[{segment.start_index / fps:.1f} s – {segment.end_index / fps:.1f} s] "
            f"{segment.action} (confidence {segment.mean_probability:.2f})")
    if segment.candidates:
        line += " candidates: " + ", ".join(f"{a} {p:.2f}" for a, p in segment.candidates)
    return line


def build_prompt(segments: Sequence[ActionSegment], taxonomy: Sequence[str], fps: float,
                 templates: Optional[PromptTemplates] = None) -> Tuple[str, str]:
    """
    Render (system_prompt, runtime_prompt); byte-deterministic for equal inputs.

    Raises:
        ValidationError when there are no segments
    """
    if not segments:
        raise ValidationError("Cannot build a prompt without segments", field="segments")
    templates = templates or PromptTemplates()

    prompt = ChatPromptTemplate.from_messages([
        ("system", templates.system),
        ("human", templates.runtime),
    ])
    system_message, runtime_message = prompt.format_messages(
        taxonomy="\n".join(f"- {action}" for action in taxonomy),
        segments="\n".join(format_segment_line(s, fps) for s in segments)
    )
    return system_message.content.strip() + "\n", runtime_message.content.strip() + "\n"


def prompt_sha256(system: str, user: str) -> str:
    """Key of a (system, user) prompt pair; also names replay fixtures."""
    return hashlib.sha256((system + "\x00" + user).encode("utf-8")).hexdigest()
