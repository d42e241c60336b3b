import os
import logging
from mgir.logger import Logger
from dotenv import load_dotenv, find_dotenv
from mgir.file_loader import load_ini, load_json


# Initialize environment
# Configuration files are resolved from MGIR_ENV_PATH, or the packaged env directory

try:
    # Load key initial environment variables from local .env file, if USE_DOTENV is set
    # In production environment, suggest setting MGIR_ENV, MGIR_ENV_PATH and LOG_FILE in OS
    if os.getenv('USE_DOTENV') == 'true':
        dotenv_path = find_dotenv(os.getenv('DOTENV_PATH', '.env'))
        if dotenv_path and os.path.exists(dotenv_path):
            _ = load_dotenv(dotenv_path)

    env_path = os.getenv('MGIR_ENV_PATH', os.path.join(os.path.dirname(os.path.abspath(__file__)), 'env'))
    config_ini = 'config_' + os.getenv('MGIR_ENV', 'dev') + '.ini'

    # MGIR environment is loaded as following module level variables
    config = load_ini(os.path.join(env_path, config_ini))
    loglevel = logging.getLevelName(config.get('LOGGING', 'LEVEL', fallback='INFO'))
    logger = Logger(os.getenv('LOG_FILE'), loglevel, os.getenv('APP', 'mgir')).getlog()
    presets = load_json(os.path.join(env_path, 'presets.json'))

    logger.debug("MGIR environment initialized")

except Exception as e:
    logging.getLogger('mgir').error(f"MGIR environment initialization exception: {e}")
    raise
