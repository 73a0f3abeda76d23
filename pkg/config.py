import os
basedir = os.path.abspath(os.path.dirname(__file__))


def _env_int(name, default):
    value = os.environ.get(name)
    return int(value) if value else default


def _env_float(name, default):
    value = os.environ.get(name)
    return float(value) if value else default


class Config:
    SLABRES_QUAD_ORDER = _env_int('SLABRES_QUAD_ORDER', 12)
    SLABRES_QUAD_LEVELS = _env_int('SLABRES_QUAD_LEVELS', 3)
    SLABRES_TOL_QUAD = _env_float('SLABRES_TOL_QUAD', 1e-6)
    SLABRES_TAYLOR_TERMS = _env_int('SLABRES_TAYLOR_TERMS', 16)
    SLABRES_MODES = _env_int('SLABRES_MODES', 20)
    SLABRES_THREADS = _env_int('SLABRES_THREADS', os.cpu_count() or 1)
    SLABRES_CACHE_DIR = os.environ.get('SLABRES_CACHE_DIR')

    @staticmethod
    def init_app(app):
        pass


class DevelopmentConfig(Config):
    DEBUG = True


class TestingConfig(Config):
    TESTING = True
    SLABRES_CACHE_DIR = None


class ProductionConfig(Config):
    @classmethod
    def init_app(cls, app):
        Config.init_app(app)

        # log to stderr
        import logging
        from logging import StreamHandler
        stream_handler = StreamHandler()
        stream_handler.setLevel(logging.INFO)
        logging.getLogger('app').addHandler(stream_handler)
        logging.getLogger('app').setLevel(logging.INFO)


config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,

    'default': DevelopmentConfig
}
