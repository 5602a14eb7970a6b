from fastapi import FastAPI, Request
from pydantic import BaseModel, Field, field_validator
from typing import Dict, List, Literal, Optional
import os
import sys
from pathlib import Path
import logging
import time

# Add parent directory to path to import core modules
sys.path.append(str(Path(__file__).parent.parent))

from core.captioner.generator import caption_records
from core.config import CaptionDefaults, LoraDefaults, ServerConfig, configure_logging
from core.llm_client.client import build_client
from core.lora.adapter import param_budget
from core.models.main import CaptionRecord, ChatExchange, PseudoLabelRecord
from core.models.settings import CaptionConfig, ConsistencyRules, LlmConfig
from core.pipeline.evaluation import lexical_f1

# Import error handling utilities
from core.utils.error_handling import PipelineException, ValidationError
from core.utils.api_middleware import ErrorHandlingMiddleware, RequestLoggingMiddleware, error_json

configure_logging()
logger = logging.getLogger(__name__)

app = FastAPI(
    title=ServerConfig.API_TITLE,
    version=ServerConfig.API_VERSION,
    description="Caption pseudo-labeled low-resolution recordings and inspect LoRA budgets"
)

app.add_middleware(ErrorHandlingMiddleware)
app.add_middleware(RequestLoggingMiddleware)


@app.exception_handler(PipelineException)
async def pipeline_exception_handler(request: Request, exc: PipelineException):
    request_id = getattr(request.state, "request_id", None) or "unknown"
    logger.error(f"💥 {exc.error_type.value}: {exc.message}")
    return error_json(exc, request_id)


class CaptionRequest(BaseModel):
    source_id: str = Field(..., description="Identifier of the recording")
    records: List[PseudoLabelRecord] = Field(..., min_length=1, description="Per-frame pseudo-labels in order")
    taxonomy: List[str] = Field(default_factory=lambda: list(CaptionDefaults.TAXONOMY),
                                description="Action names indexed by class")
    fps: float = Field(CaptionDefaults.FPS, gt=0.0, description="Frame rate used for segment times")
    top_k: int = Field(CaptionDefaults.TOP_K, ge=1, description="Candidates kept per frame and segment")
    rules: Optional[ConsistencyRules] = Field(None, description="Consistency rules (shipped rules when omitted)")
    # The HTTP surface never calls a live model
    llm_mode: Literal["mock", "replay"] = Field("mock", description="Mock captions or recorded fixtures")
    fixtures_dir: Optional[str] = Field(None, description="Replay fixture directory relative to the fixtures root")

    @field_validator('taxonomy')
    @classmethod
    def unique_taxonomy(cls, v):
        if not v or len(set(v)) != len(v):
            raise ValueError("taxonomy must be non-empty with unique names")
        return v


class CaptionResponse(BaseModel):
    caption: Optional[CaptionRecord] = Field(None, description="None when every frame was uncertain")
    attempts: int = 0
    model: Optional[str] = None
    processing_time_ms: float


class BudgetRequest(BaseModel):
    d: int = Field(..., ge=1, description="Square base matrix dimension")
    r: int = Field(LoraDefaults.RANK, ge=1, description="Adapter rank")


class BudgetResponse(BaseModel):
    adapter_params: int
    full_params: int
    ratio: float


class LexicalRequest(BaseModel):
    candidate: str
    reference: str


def _fixtures_path(fixtures_dir: str) -> str:
    """Resolve a request's fixture directory; it may not leave the configured fixtures root."""
    root = Path(os.environ.get(ServerConfig.FIXTURES_ROOT_ENV, ServerConfig.DEFAULT_FIXTURES_ROOT)).resolve()
    path = (root / fixtures_dir).resolve()
    if not path.is_relative_to(root):
        raise ValidationError("fixtures_dir must lie under the fixtures root", field="fixtures_dir")
    return str(path)


@app.get("/")
async def root():
    return {"message": ServerConfig.API_TITLE, "endpoints": ["/caption", "/lora/budget", "/eval/lexical"]}


@app.post("/caption", response_model=CaptionResponse)
def caption(request: CaptionRequest):
    """
    Pseudo-label records -> frame states -> temporal filter -> segments -> caption.
    """
    start_time = time.time()
    logger.info(f"🚀 Caption request for {request.source_id}: {len(request.records)} frames")

    if request.llm_mode == "replay" and not request.fixtures_dir:
        raise ValidationError("llm_mode 'replay' requires fixtures_dir", field="fixtures_dir")

    fixtures_dir = _fixtures_path(request.fixtures_dir) if request.llm_mode == "replay" else None

    config = CaptionConfig(top_k=request.top_k, fps=request.fps, rules=request.rules)
    client = build_client(LlmConfig(mode=request.llm_mode, fixtures_dir=fixtures_dir))
    audit: List[ChatExchange] = []
    record = caption_records(request.source_id, request.records, request.taxonomy, config, client, audit=audit)

    elapsed_ms = (time.time() - start_time) * 1000.0
    logger.info(f"✅ Caption request for {request.source_id} finished in {elapsed_ms:.1f} ms")
    return CaptionResponse(
        caption=record,
        attempts=audit[0].attempts if audit else 0,
        model=audit[0].model if audit else None,
        processing_time_ms=elapsed_ms
    )


@app.post("/lora/budget", response_model=BudgetResponse)
async def lora_budget(request: BudgetRequest):
    budget = param_budget(request.d, request.r)
    return BudgetResponse(**budget._asdict())


@app.post("/eval/lexical")
async def eval_lexical(request: LexicalRequest) -> Dict[str, float]:
    return {"f1": lexical_f1(request.candidate, request.reference)}


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host=ServerConfig.DEFAULT_HOST, port=ServerConfig.DEFAULT_PORT)
