from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import ValidationError
import logging

from exobounds import __version__, io
from exobounds.exceptions import ExoboundsError
from exobounds.schemas import (
    BoundsRequest, BoundsResponse, CheckRequest, IndependenceReport, OracleRequest, OracleResponse
)
from exobounds.services import BoundsService, OracleService, SelectionService

logger = logging.getLogger(__name__)

SERVICE_NAME = "Exogeneity Bounds API"

app = FastAPI(
    title=SERVICE_NAME,
    description=(
        "Sharp bounds on treatment effects under partial exogeneity: "
        "T- and U-independence checks, identified sets and the LP oracle"
    ),
    version=__version__,
    docs_url="/docs",
    redoc_url="/redoc"
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def _json(model) -> JSONResponse:
    """Serialize with non-finite floats rendered as null"""
    return JSONResponse(content=io.to_jsonable(model))


@app.get("/favicon.ico", include_in_schema=False)
async def favicon():
    """Handle favicon requests"""
    return Response(status_code=204)


@app.get("/", tags=["Health"])
async def root():
    """Health check endpoint"""
    return {"message": SERVICE_NAME, "status": "healthy"}


@app.get("/health", tags=["Health"])
async def health_check():
    """Detailed health check"""
    return {
        "status": "healthy",
        "service": SERVICE_NAME,
        "version": __version__
    }


@app.post("/api/v1/selection/check", response_model=IndependenceReport, tags=["Selection"])
async def check_selection(check_request: CheckRequest):
    """
    Check a piecewise-affine latent propensity score against T-independence
    on a set or interval of outcome values, or against mean independence.
    """
    try:
        return _json(SelectionService.check(check_request))
    except (HTTPException, ExoboundsError, ValidationError):
        raise
    except Exception as e:
        logger.error(f"Error checking selection model: {e}")
        raise HTTPException(status_code=500, detail="Failed to check selection model")


@app.post("/api/v1/bounds", response_model=BoundsResponse, tags=["Bounds"])
async def compute_bounds(bounds_request: BoundsRequest):
    """Identified set for E(Y0|X=1), Q_{Y0|X}(tau|1), the ATT or the QTT(q)"""
    try:
        return _json(BoundsService.compute(bounds_request))
    except (HTTPException, ExoboundsError, ValidationError):
        raise
    except Exception as e:
        logger.error(f"Error computing bounds: {e}")
        raise HTTPException(status_code=500, detail="Failed to compute bounds")


@app.post("/api/v1/oracle/compare", response_model=OracleResponse, tags=["Oracle"])
async def compare_oracle(oracle_request: OracleRequest):
    """Compare LP extremal cdfs with the analytic bounds on a 21-point grid"""
    try:
        return OracleService.compare(oracle_request)
    except (HTTPException, ExoboundsError, ValidationError):
        raise
    except Exception as e:
        logger.error(f"Error running oracle: {e}")
        raise HTTPException(status_code=500, detail="Failed to run oracle comparison")


# Error handlers
@app.exception_handler(ExoboundsError)
@app.exception_handler(ValidationError)
async def exobounds_error_handler(request: Request, exc: Exception):
    logger.warning(f"Rejected {request.url.path}: {exc}")
    return JSONResponse(
        status_code=422,
        content={"detail": str(exc), "status_code": 422}
    )


@app.exception_handler(404)
async def not_found_handler(request: Request, exc: HTTPException):
    return JSONResponse(
        status_code=404,
        content={"detail": "Resource not found", "status_code": 404}
    )


@app.exception_handler(500)
async def internal_error_handler(request: Request, exc: HTTPException):
    return JSONResponse(
        status_code=500,
        content={"detail": "Internal server error", "status_code": 500}
    )
