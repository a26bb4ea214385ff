#!/usr/bin/env python

from setuptools import setup
from iic import __version__


setup(name="python-iic",
        version=__version__,
        description="MIDI generation steered by an instantaneous information content curve",
        license="Apache License (2.0)",
        packages=[
            "iic",
            "iic.midi",
            "iic.tokenizer",
            "iic.critic",
            "iic.surprisal",
            "iic.curves",
            "iic.search",
            "iic.analysis",
            "iic.cli",
            ],
        classifiers=["Programming Language :: Python",
            "Programming Language :: Python :: 3",
            "Operating System :: OS Independent",
            "License :: OSI Approved :: Apache Software License"],
        install_requires=["hexdump", "numpy", "scipy"],
        extras_require={
            "progress": ["progressbar2"],
            "plot": ["matplotlib"],
            "test": ["pytest", "progressbar2", "matplotlib"],
            },
        entry_points={
            "console_scripts": ["iic=iic.cli:main"],
            })
