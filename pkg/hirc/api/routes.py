import json
import logging
from functools import lru_cache
from typing import Optional

from fastapi import APIRouter, Depends, File, Form, HTTPException, UploadFile

from hirc.core.diagnostics import ErrorClass
from hirc.core.errors import HircError, LoweringError, PassError, SimulationError
from hirc.opt.pipeline import parse_pass_list
from hirc.services.compiler_service import CompilerService

logger = logging.getLogger(__name__)

router = APIRouter()


# Dependency to get the compiler service instance
@lru_cache()
def get_compiler_service():
    return CompilerService()


async def _source(source: Optional[str], file: Optional[UploadFile]) -> str:
    if file is not None:
        return (await file.read()).decode("utf-8")
    if source is None:
        raise HTTPException(status_code=422, detail="provide either 'source' or 'file'")
    return source


def _reject(result):
    """Designs with error diagnostics are unprocessable entities."""
    if not result.ok:
        raise HTTPException(status_code=422, detail=result.diagnostics)
    return result


def _internal(e: Exception):
    logger.exception("compile request failed")
    raise HTTPException(status_code=500, detail=str(e))


@router.post("/check")
async def check(
    source: Optional[str] = Form(None),
    filename: str = Form("<input>"),
    file: Optional[UploadFile] = File(None),
    service: CompilerService = Depends(get_compiler_service)
):
    return _reject(service.check(await _source(source, file), filename))


@router.post("/optimize")
async def optimize(
    source: Optional[str] = Form(None),
    filename: str = Form("<input>"),
    passes: Optional[str] = Form(None),
    file: Optional[UploadFile] = File(None),
    service: CompilerService = Depends(get_compiler_service)
):
    text = await _source(source, file)
    try:
        result = service.optimize(text, filename, parse_pass_list(passes) if passes is not None else None)
    except PassError as e:
        if e.diagnostics and all(d.error_class is ErrorClass.UNKNOWN_PASS for d in e.diagnostics):
            raise HTTPException(status_code=422, detail=[d.to_json() for d in e.diagnostics])
        _internal(e)
    return _reject(result)


@router.post("/emit")
async def emit(
    source: Optional[str] = Form(None),
    filename: str = Form("<input>"),
    top: Optional[str] = Form(None),
    passes: Optional[str] = Form(None),
    ram_style: Optional[str] = Form(None),
    file: Optional[UploadFile] = File(None),
    service: CompilerService = Depends(get_compiler_service)
):
    text = await _source(source, file)
    try:
        result = service.emit(text, filename, top, parse_pass_list(passes) if passes is not None else None,
                              ram_style)
    except (PassError, LoweringError) as e:
        _internal(e)
    return _reject(result)


@router.post("/simulate")
async def simulate(
    source: Optional[str] = Form(None),
    filename: str = Form("<input>"),
    top: Optional[str] = Form(None),
    inputs: str = Form("{}"),
    file: Optional[UploadFile] = File(None),
    service: CompilerService = Depends(get_compiler_service)
):
    text = await _source(source, file)
    try:
        data = json.loads(inputs)
    except json.JSONDecodeError as e:
        raise HTTPException(status_code=422, detail=f"inputs is not valid JSON: {e}")
    try:
        result = service.simulate(text, filename, top, data)
    except SimulationError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except HircError as e:
        _internal(e)
    return _reject(result)
