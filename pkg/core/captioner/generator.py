"""Caption generation from frame states through a chat client."""
import logging
from typing import List, Optional, Sequence, Tuple

from core.captioner.consistency import temporal_filter
from core.captioner.prompts import PromptTemplates, build_prompt, prompt_sha256
from core.captioner.states import make_states, segment
from core.llm_client.client import ChatClient
from core.models.main import CaptionRecord, ChatExchange, PseudoLabelRecord
from core.models.settings import CaptionConfig, ConsistencyRules
from core.utils.error_handling import LlmResponseError

logger = logging.getLogger(__name__)


def generate_caption(prompts: Tuple[str, str], client: ChatClient,
                     audit: Optional[List[ChatExchange]] = None) -> str:
    """
    Send (system, runtime) prompts and return the trimmed caption.

    Args:
        prompts: Output of build_prompt
        client: Any chat client
        audit: When given, the full exchange is appended for later inspection

    Raises:
        LlmResponseError on an empty completion; transport errors propagate
    """
    system, runtime = prompts
    exchange = client.complete(system, runtime)
    caption = exchange.response.strip()
    if not caption:
        raise LlmResponseError("Empty completion", attempts=exchange.attempts)
    if audit is not None:
        audit.append(exchange)
    logger.info(f"📝 Caption received ({len(caption)} chars, {exchange.attempts} attempt(s))")
    return caption


def caption_records(source_id: str, records: Sequence[PseudoLabelRecord], taxonomy: Sequence[str],
                    config: CaptionConfig, client: ChatClient, rules: Optional[ConsistencyRules] = None,
                    templates: Optional[PromptTemplates] = None,
                    audit: Optional[List[ChatExchange]] = None) -> Optional[CaptionRecord]:
    """
    states -> temporal filter -> segments -> prompts -> caption for one clip.

    Returns None when every frame is uncertain and no segment remains.
    """
    rules = rules or config.resolve_rules()
    states = temporal_filter(make_states(records, config.top_k, rules.p_min, taxonomy), rules)
    segments = segment(states, config.top_k)
    if not segments:
        logger.warning(f"⚠️ {source_id}: all frames uncertain, no caption generated")
        return None

    system, runtime = build_prompt(segments, taxonomy, config.fps, templates)
    caption = generate_caption((system, runtime), client, audit)
    return CaptionRecord(source_id=source_id, caption=caption, segments=segments,
                         prompt_sha256=prompt_sha256(system, runtime))
