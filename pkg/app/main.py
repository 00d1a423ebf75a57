from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from .config import settings
from .routers.intensity import router as intensity_router
from .services.logging_service import configure_logging

configure_logging(settings)

app = FastAPI(title=settings.api_title, version=settings.api_version)

# CORS設定
app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# 推定APIルーターを追加
app.include_router(intensity_router)


@app.get("/")
def read_root():
    return {"message": settings.api_title, "status": "running"}


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(app, host=settings.api_host, port=settings.api_port)
