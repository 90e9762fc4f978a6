from cws.api.app import ClockDriver, build_app, create_app

__all__ = ["ClockDriver", "build_app", "create_app"]
