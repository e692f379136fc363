from anchorcache.service.app import app, create_app, engine_config

__all__ = ["app", "create_app", "engine_config"]
