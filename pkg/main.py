from typing import Optional

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from apscheduler.schedulers.background import BackgroundScheduler

from app.config import settings
from app.middleware.logging import logging_middleware
from app.routes.offload import router as offload_router
from app.services.broker import PolicyBroker
from app.services.cleanup import cleanup_old_checkpoints, cleanup_old_logs
from app.utils.log_helpers import log_info
from app.utils.logger import setup_logger


def create_app(broker: Optional[PolicyBroker] = None) -> FastAPI:
    """Factory function para criar a aplicação FastAPI"""

    setup_logger()

    app = FastAPI(
        title=settings.APP_TITLE,
        description=settings.APP_DESCRIPTION,
        version=settings.APP_VERSION,
    )
    app.state.broker = broker
    app.state.scheduler = None

    # Middleware de logging antes dos demais
    app.middleware("http")(logging_middleware)

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],  # Em produção, especifique os domínios permitidos
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["X-Request-ID"],
    )

    # Registrar rotas
    app.include_router(offload_router)

    @app.get("/")
    def root():
        """Endpoint raiz - retorna informações da API"""
        return {
            "app": settings.APP_TITLE,
            "version": settings.APP_VERSION,
            "docs": "/docs"
        }

    def refresh_policy():
        if app.state.broker is not None:
            app.state.broker.refresh_policy()

    def cleanup():
        cleanup_old_logs()
        cleanup_old_checkpoints(settings.CHECKPOINT_DIR, settings.CHECKPOINT_KEEP)

    @app.on_event("startup")
    async def startup():
        """Executado ao iniciar a aplicação"""
        if app.state.broker is None:
            app.state.broker = PolicyBroker.from_settings()
        log_info("API iniciada", policy_version=app.state.broker.version)
        cleanup_old_logs()

        # Atores "puxam" a política mais nova do diretório de checkpoints
        scheduler = BackgroundScheduler()
        scheduler.add_job(refresh_policy, 'interval', minutes=settings.POLICY_REFRESH_MINUTES)
        scheduler.add_job(cleanup, 'interval', minutes=settings.CLEANUP_INTERVAL_MINUTES)
        scheduler.start()
        app.state.scheduler = scheduler
        log_info("Scheduler iniciado", refresh_minutes=settings.POLICY_REFRESH_MINUTES,
                 cleanup_minutes=settings.CLEANUP_INTERVAL_MINUTES)

    @app.on_event("shutdown")
    async def shutdown():
        """Executado ao desligar a aplicação"""
        if app.state.scheduler is not None:
            app.state.scheduler.shutdown(wait=False)
        log_info("API desligada")

    return app

app = create_app()

if __name__ == "__main__":
    import uvicorn
    uvicorn.run(
        "main:app",
        host="127.0.0.1",
        port=8000,
        reload=True
    )
