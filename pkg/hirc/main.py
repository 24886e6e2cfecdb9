from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from hirc.api.routes import router as compile_router
from hirc.core.config import get_settings
from hirc.core.logging import setup_logging

settings = get_settings()
setup_logging(settings.LOG_LEVEL)

app = FastAPI(
    title=settings.PROJECT_NAME,
    version=settings.VERSION,
    description="Check, optimize, lower and simulate HIR hardware designs"
)

# CORS Middleware (for browser-based editors)
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include Routes
app.include_router(compile_router, prefix="/compile", tags=["Compile"])


@app.get("/health")
def health_check():
    return {"status": "ok", "project": settings.PROJECT_NAME, "version": settings.VERSION}


def serve(host: str = "127.0.0.1", port: int = 8000, reload: bool = False):
    import uvicorn
    uvicorn.run("hirc.main:app", host=host, port=port, reload=reload)


if __name__ == "__main__":
    serve()
