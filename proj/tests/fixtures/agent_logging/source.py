import logging

logger = logging.getLogger(__name__)


def divide(a, b):
    if b == 0:
        logger.error("division by zero")
        return None
    return a / b


def greet(name):
    logger.info("greeting " + name)
    return "hello " + name
