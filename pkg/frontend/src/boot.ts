// Browser entry point; kept separate so tests can import main.ts without
// triggering a bootstrap.
import { bootstrap } from "./main.js";

bootstrap();
