void CWE78_OS_Command_Injection__char_console_popen_81_bad()
{
   char * data;
   char dataBuffer[100] = "ls ";
   data = dataBuffer;
   /* POTENTIAL FLAW: Read data from the console using fgets */
   if (fgets(data+3, 100-3, stdin) != NULL)
   {
       popen(data, "r");
   }
}
