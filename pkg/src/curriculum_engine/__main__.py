from curriculum_engine.cli import main

raise SystemExit(main())
